//! Dense real-matrix kernels with explicit tolerance gates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative thresholds used by every definiteness and rank decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Relative eigenvalue gate for strict and non-strict definiteness.
    pub definiteness_eps: f64,
    /// Relative singular-value gate for rank decisions.
    pub rank_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { definiteness_eps: 1e-8, rank_eps: 1e-9 }
    }
}

impl Tolerance {
    pub fn new(definiteness_eps: f64, rank_eps: f64) -> Result<Self> {
        for (name, v) in [("definiteness_eps", definiteness_eps), ("rank_eps", rank_eps)] {
            if !(v.is_finite() && v > 0.0 && v <= 1e-3) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1e-3], got {v}")));
            }
        }
        Ok(Tolerance { definiteness_eps, rank_eps })
    }

    /// Gate value `eps * (1 + norm)` for a matrix of the given norm.
    pub fn gate(&self, norm: f64) -> f64 {
        self.definiteness_eps * (1.0 + norm)
    }
}

/// A square matrix that is exactly symmetric as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(Mat);

impl SymMat {
    /// Accepts user data: finite, square, and symmetric up to `rank_eps * ||m||`.
    /// Small asymmetry is averaged away; anything larger is rejected.
    pub fn from_input(m: Mat, tol: &Tolerance) -> Result<Self> {
        check_finite(&m, "symmetric block")?;
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidMatrix(format!("symmetric block must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > tol.rank_eps * m.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidMatrix(format!("asymmetry {asym:e} exceeds tolerance")));
        }
        Ok(SymMat::symmetrize(&m))
    }

    /// Symmetric part `(m + m^T)/2`. Panics when `m` is not square.
    pub fn symmetrize(m: &Mat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        let mut s = m + m.transpose();
        s *= 0.5;
        SymMat(s)
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(Mat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(Mat::identity(n, n))
    }

    pub fn scalar(v: f64) -> Self {
        SymMat(Mat::from_element(1, 1, v))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMat(Mat::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn scaled(&self, k: f64) -> Self {
        SymMat(&self.0 * k)
    }

    pub fn neg(&self) -> Self {
        SymMat(-&self.0)
    }

    pub fn add(&self, other: &SymMat) -> Self {
        SymMat(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> Self {
        SymMat(&self.0 - &other.0)
    }

    /// Congruence `T^T self T`.
    pub fn congruence(&self, t: &Mat) -> Self {
        SymMat::symmetrize(&(t.transpose() * &self.0 * t))
    }
}

pub fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix(format!("{what} has non-finite entries")))
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }

    /// Spectral norm, the largest eigenvalue magnitude.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
    }
}

pub fn sym_eigen(m: &SymMat) -> Result<SymEigen> {
    check_finite(m.as_mat(), "matrix")?;
    let n = m.dim();
    if n == 0 {
        return Ok(SymEigen { values: Vec::new(), vectors: Mat::zeros(0, 0) });
    }
    let eig = m.as_mat().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(SymEigen { values, vectors })
}

/// Outcome of a definiteness test; `margin` is the decisive eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Definiteness {
    pub holds: bool,
    pub margin: f64,
    pub norm: f64,
}

/// Strict negative definiteness: `lambda_max < -eps (1 + ||m||)`.
pub fn is_neg_def(m: &SymMat, tol: &Tolerance) -> Result<Definiteness> {
    let e = sym_eigen(m)?;
    let (margin, norm) = (e.max(), e.norm());
    Ok(Definiteness { holds: m.dim() == 0 || margin < -tol.gate(norm), margin, norm })
}

/// Non-strict `m <= 0` gate: `lambda_max <= eps (1 + ||m||)`.
pub fn is_neg_semidef(m: &SymMat, tol: &Tolerance) -> Result<Definiteness> {
    let e = sym_eigen(m)?;
    let (margin, norm) = (e.max(), e.norm());
    Ok(Definiteness { holds: m.dim() == 0 || margin <= tol.gate(norm), margin, norm })
}

/// Non-strict `m >= 0` gate: `lambda_min >= -eps (1 + ||m||)`.
pub fn is_pos_semidef(m: &SymMat, tol: &Tolerance) -> Result<Definiteness> {
    let e = sym_eigen(m)?;
    let (margin, norm) = (e.min(), e.norm());
    Ok(Definiteness { holds: m.dim() == 0 || margin >= -tol.gate(norm), margin, norm })
}

/// Strict positive definiteness: `lambda_min > eps (1 + ||m||)`.
pub fn is_pos_def(m: &SymMat, tol: &Tolerance) -> Result<Definiteness> {
    let e = sym_eigen(m)?;
    let (margin, norm) = (e.min(), e.norm());
    Ok(Definiteness { holds: m.dim() == 0 || margin > tol.gate(norm), margin, norm })
}

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn rank(m: &Mat, tol: &Tolerance) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > tol.rank_eps * smax).count(),
        _ => 0,
    }
}

/// Ratio of extreme singular values; infinite for singular or empty-rank input.
pub fn condition_number(m: &Mat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (None, _) => 1.0,
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis of `Ker c`, columns normalised so that the first
/// nonzero entry is positive.
pub fn kernel_basis(c: &Mat, tol: &Tolerance) -> Mat {
    let n = c.ncols();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    if c.nrows() == 0 || c.amax() == 0.0 {
        return Mat::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let padded = if c.nrows() < n {
        let mut p = Mat::zeros(n, n);
        p.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
        p
    } else {
        c.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let null: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol.rank_eps * smax).collect();
    let mut basis = Mat::zeros(n, null.len());
    for (k, &i) in null.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    normalize_signs(&mut basis);
    basis
}

fn normalize_signs(basis: &mut Mat) {
    for mut col in basis.column_iter_mut() {
        let scale = col.amax();
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-10 * scale) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Orthonormal `W` with `[v W]` square orthogonal.
pub fn orth_complement(v: &Mat, tol: &Tolerance) -> Result<Mat> {
    check_finite(v, "basis")?;
    let k = v.ncols();
    let gram = v.transpose() * v;
    let err = (&gram - Mat::identity(k, k)).amax();
    if err > 1e-8 {
        return Err(Error::InvalidBasis(format!("V^T V deviates from I by {err:e}")));
    }
    if k == 0 {
        return Ok(Mat::identity(v.nrows(), v.nrows()));
    }
    Ok(kernel_basis(&v.transpose(), tol))
}

/// Inverse with a relative singular-value gate.
pub fn inverse(m: &Mat, tol: &Tolerance) -> Result<Mat> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("inverse of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let s = singular_values(m);
    let (hi, lo) = (s[0], s[s.len() - 1]);
    if hi.is_nan() || hi <= 0.0 || lo <= tol.rank_eps * hi {
        return Err(Error::SingularPivot);
    }
    m.clone().try_inverse().ok_or(Error::SingularPivot)
}

/// Moore-Penrose pseudo-inverse with the rank gate.
pub fn pseudo_inverse(m: &Mat, tol: &Tolerance) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let smax = spectral_norm(m);
    if smax == 0.0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    m.clone().svd(true, true).pseudo_inverse(tol.rank_eps * smax).expect("both singular bases computed")
}

/// `A - B D^{-1} B^T` for `m = [[A, B], [B^T, D]]` with `A` of size `split`.
pub fn schur_complement(m: &SymMat, split: usize, tol: &Tolerance) -> Result<SymMat> {
    let n = m.dim();
    if split > n {
        return Err(Error::InvalidInput(format!("split {split} exceeds dimension {n}")));
    }
    let mm = m.as_mat();
    let a = mm.view((0, 0), (split, split)).into_owned();
    let b = mm.view((0, split), (split, n - split)).into_owned();
    let d = mm.view((split, split), (n - split, n - split)).into_owned();
    let d_inv = inverse(&d, tol)?;
    Ok(SymMat::symmetrize(&(a - &b * d_inv * b.transpose())))
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Horizontal concatenation; all blocks must share the row count `rows`.
pub fn hstack(rows: usize, blocks: &[&Mat]) -> Mat {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share the column count `cols`.
pub fn vstack(cols: usize, blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Largest absolute entry of `a - b` relative to `1 + max(|a|, |b|)`.
pub fn relative_gap(a: &Mat, b: &Mat) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    if a.is_empty() {
        return 0.0;
    }
    (a - b).amax() / (1.0 + a.amax().max(b.amax()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn m(rows: usize, cols: usize, data: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, data)
    }

    #[test]
    fn eigenvalues_sorted() {
        let e = sym_eigen(&SymMat::from_diagonal(&[-1.0, -2.0])).unwrap();
        assert_eq!(e.values, vec![-2.0, -1.0]);
        let e = sym_eigen(&SymMat::symmetrize(&m(2, 2, &[0.0, 1.0, 1.0, 0.0]))).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_rejects_nan() {
        let bad = SymMat(m(1, 1, &[f64::NAN]));
        assert!(matches!(sym_eigen(&bad), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn neg_def_gate() {
        let t = tol();
        let d = is_neg_def(&SymMat::from_diagonal(&[-1.0, -2.0]), &t).unwrap();
        assert!(d.holds);
        assert_eq!(d.margin, -1.0);
        assert!(!is_neg_def(&SymMat::from_diagonal(&[0.0, -1.0]), &t).unwrap().holds);
        assert!(!is_neg_def(&SymMat::zeros(3), &t).unwrap().holds);
    }

    #[test]
    fn semidefinite_gates_accept_roundoff() {
        let t = tol();
        assert!(is_pos_semidef(&SymMat::from_diagonal(&[-1e-12, 3.0]), &t).unwrap().holds);
        assert!(!is_pos_semidef(&SymMat::from_diagonal(&[-1e-3, 3.0]), &t).unwrap().holds);
        assert!(is_neg_semidef(&SymMat::zeros(2), &t).unwrap().holds);
    }

    #[test]
    fn kernel_examples() {
        let t = tol();
        let v = kernel_basis(&m(1, 2, &[1.0, 0.0]), &t);
        assert_eq!(v.shape(), (2, 1));
        assert!((v[(0, 0)]).abs() < 1e-15 && (v[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(kernel_basis(&Mat::identity(2, 2), &t).ncols(), 0);
        let v = kernel_basis(&m(2, 2, &[1.0, 1.0, 2.0, 2.0]), &t);
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(v.ncols(), 1);
        assert!((v[(0, 0)] - s).abs() < 1e-12 && (v[(1, 0)] + s).abs() < 1e-12);
    }

    #[test]
    fn kernel_of_wide_and_tall() {
        let t = tol();
        let c = m(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        let v = kernel_basis(&c, &t);
        assert_eq!(v.ncols(), 1);
        assert!((&c * &v).amax() < 1e-12);
        let c = m(1, 4, &[1.0, -1.0, 0.5, 2.0]);
        let v = kernel_basis(&c, &t);
        assert_eq!(v.ncols(), 3);
        assert!((v.transpose() * &v - Mat::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn complement_examples() {
        let t = tol();
        let w = orth_complement(&m(2, 1, &[0.0, 1.0]), &t).unwrap();
        assert!((w[(0, 0)].abs() - 1.0).abs() < 1e-14 && w[(1, 0)].abs() < 1e-14);
        let w = orth_complement(&Mat::zeros(2, 0), &t).unwrap();
        assert_eq!(w, Mat::identity(2, 2));
        let s = 1.0 / 2f64.sqrt();
        let w = orth_complement(&m(2, 1, &[s, -s]), &t).unwrap();
        assert!((w[(0, 0)].abs() - s).abs() < 1e-12 && (w[(0, 0)] - w[(1, 0)]).abs() < 1e-12);
        assert!(matches!(orth_complement(&m(2, 1, &[1.0, 1.0]), &t), Err(Error::InvalidBasis(_))));
    }

    #[test]
    fn schur_examples() {
        let t = tol();
        let s = schur_complement(&SymMat::symmetrize(&m(2, 2, &[2.0, 1.0, 1.0, 1.0])), 1, &t).unwrap();
        assert!((s.as_mat()[(0, 0)] - 1.0).abs() < 1e-14);
        let bd = SymMat::from_diagonal(&[3.0, 4.0, 5.0]);
        let s = schur_complement(&bd, 2, &t).unwrap();
        assert_eq!(s.as_mat(), &m(2, 2, &[3.0, 0.0, 0.0, 4.0]));
        let sing = SymMat::from_diagonal(&[1.0, 0.0]);
        assert_eq!(schur_complement(&sing, 1, &t), Err(Error::SingularPivot));
    }

    #[test]
    fn input_symmetrization() {
        let t = tol();
        let ok = SymMat::from_input(m(2, 2, &[1.0, 2.0, 2.0 + 1e-12, 3.0]), &t).unwrap();
        assert_eq!(ok.as_mat()[(0, 1)], ok.as_mat()[(1, 0)]);
        assert!(SymMat::from_input(m(2, 2, &[1.0, 2.0, 2.5, 3.0]), &t).is_err());
        assert!(SymMat::from_input(m(1, 2, &[1.0, 2.0]), &t).is_err());
    }

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerance::new(1e-8, 1e-9).is_ok());
        assert!(Tolerance::new(0.0, 1e-9).is_err());
        assert!(Tolerance::new(1e-8, 0.1).is_err());
    }

    #[test]
    fn rank_and_condition() {
        let t = tol();
        assert_eq!(rank(&m(2, 2, &[1.0, 1.0, 2.0, 2.0]), &t), 1);
        assert_eq!(rank(&Mat::zeros(2, 3), &t), 0);
        assert_eq!(condition_number(&Mat::identity(3, 3)), 1.0);
        assert!(condition_number(&m(2, 2, &[1.0, 1.0, 1.0, 1.0])) > 1e12);
    }
}
