use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, SymMat, Tolerance, Vector};
use crate::model::SystemId;

/// Quadratic supply `s(a, b) = [a; b]^T [[Q, S], [S^T, R]] [a; b]` with `a`
/// the input-side argument and `b` the output-side argument.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSupply {
    pub q: SymMat,
    pub s: Mat,
    pub r: SymMat,
}

impl QuadraticSupply {
    pub fn new(q: SymMat, s: Mat, r: SymMat) -> Result<Self> {
        if s.nrows() != q.dim() || s.ncols() != r.dim() {
            return Err(Error::InvalidInput(format!(
                "supply cross block is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                q.dim(),
                r.dim()
            )));
        }
        linalg::check_finite(&s, "supply cross block")?;
        Ok(QuadraticSupply { q, s, r })
    }

    /// Builds a supply from raw blocks, symmetrising `q` and `r` within tolerance.
    pub fn from_blocks(q: Mat, s: Mat, r: Mat, tol: &Tolerance) -> Result<Self> {
        QuadraticSupply::new(SymMat::from_input(q, tol)?, s, SymMat::from_input(r, tol)?)
    }

    pub fn zeros(first: usize, second: usize) -> Self {
        QuadraticSupply { q: SymMat::zeros(first), s: Mat::zeros(first, second), r: SymMat::zeros(second) }
    }

    /// Dimensions of the (first, second) arguments.
    pub fn dims(&self) -> (usize, usize) {
        (self.q.dim(), self.r.dim())
    }

    /// The mirror supply `(-R, -S^T, -Q)`; a supply and its mirror sum to
    /// zero whenever the arguments are swapped across a link.
    pub fn mirror(&self) -> Self {
        QuadraticSupply { q: self.r.neg(), s: -self.s.transpose(), r: self.q.neg() }
    }

    pub fn neg(&self) -> Self {
        QuadraticSupply { q: self.q.neg(), s: -&self.s, r: self.r.neg() }
    }

    pub fn evaluate(&self, a: &Vector, b: &Vector) -> Result<f64> {
        let (na, nb) = self.dims();
        if a.len() != na || b.len() != nb {
            return Err(Error::InvalidInput(format!("supply expects arguments of length ({na}, {nb}), got ({}, {})", a.len(), b.len())));
        }
        let qa = self.q.as_mat() * a;
        let sb = &self.s * b;
        let rb = self.r.as_mat() * b;
        Ok(a.dot(&qa) + 2.0 * a.dot(&sb) + b.dot(&rb))
    }

    /// The full symmetric matrix `[[Q, S], [S^T, R]]`.
    pub fn matrix(&self) -> SymMat {
        let (na, nb) = self.dims();
        let mut m = Mat::zeros(na + nb, na + nb);
        m.view_mut((0, 0), (na, na)).copy_from(self.q.as_mat());
        m.view_mut((0, na), (na, nb)).copy_from(&self.s);
        m.view_mut((na, 0), (nb, na)).copy_from(&self.s.transpose());
        m.view_mut((na, na), (nb, nb)).copy_from(self.r.as_mat());
        SymMat::symmetrize(&m)
    }

    /// Supply on concatenated arguments: `sum_k s_k(a_k, b_k)`.
    pub fn direct_sum(parts: &[&QuadraticSupply]) -> Self {
        let qs: Vec<&Mat> = parts.iter().map(|p| p.q.as_mat()).collect();
        let ss: Vec<&Mat> = parts.iter().map(|p| &p.s).collect();
        let rs: Vec<&Mat> = parts.iter().map(|p| p.r.as_mat()).collect();
        QuadraticSupply {
            q: SymMat::symmetrize(&linalg::block_diag(&qs)),
            s: linalg::block_diag(&ss),
            r: SymMat::symmetrize(&linalg::block_diag(&rs)),
        }
    }

    /// Relative entrywise gap between two supplies of equal shape.
    pub fn relative_gap(&self, other: &QuadraticSupply) -> f64 {
        linalg::relative_gap(self.matrix().as_mat(), other.matrix().as_mat())
    }

    /// Entrywise residual of the mirror identity between `self` and `other`.
    pub fn neutrality_residual(&self, other: &QuadraticSupply) -> f64 {
        if self.dims() != (other.dims().1, other.dims().0) {
            return f64::INFINITY;
        }
        self.mirror().relative_gap(other)
    }
}

/// Block-diagonal storage `P = diag(P_1, ..., P_N)` with its certification record.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageCertificate {
    pub blocks: BTreeMap<SystemId, SymMat>,
    /// Largest eigenvalue of the certified Lyapunov LMI; negative when it holds.
    pub margin: f64,
    /// Smallest eigenvalue over all blocks.
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
    pub lyapunov_holds: bool,
}

impl StorageCertificate {
    pub fn block(&self, id: SystemId) -> Result<&SymMat> {
        self.blocks.get(&id).ok_or(Error::UnknownSystem(id))
    }

    /// Block-diagonal storage over the given members in the listed order.
    pub fn stacked(&self, members: &[SystemId]) -> Result<SymMat> {
        let blocks: Vec<&Mat> = members.iter().map(|&id| self.block(id).map(|b| b.as_mat())).collect::<Result<_>>()?;
        Ok(SymMat::symmetrize(&linalg::block_diag(&blocks)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s12() -> QuadraticSupply {
        QuadraticSupply::new(SymMat::scalar(4754.6), Mat::from_element(1, 1, 1543.5), SymMat::scalar(-1637.6)).unwrap()
    }

    #[test]
    fn mirror_of_line_supply() {
        let m = s12().mirror();
        assert_eq!(m.q.as_mat()[(0, 0)], 1637.6);
        assert_eq!(m.s[(0, 0)], -1543.5);
        assert_eq!(m.r.as_mat()[(0, 0)], -4754.6);
        assert_eq!(m.mirror(), s12());
        let z = QuadraticSupply::zeros(2, 3);
        assert_eq!(z.mirror(), QuadraticSupply::zeros(3, 2));
    }

    #[test]
    fn mirror_of_second_edge() {
        let s23 = QuadraticSupply::new(SymMat::scalar(608.0), Mat::from_element(1, 1, -506.8), SymMat::scalar(-2298.6)).unwrap();
        let s32 = s23.mirror();
        assert_eq!(s32.matrix().as_mat(), &Mat::from_row_slice(2, 2, &[2298.6, 506.8, 506.8, -608.0]));
    }

    #[test]
    fn evaluation() {
        let one = Vector::from_element(1, 1.0);
        assert!((s12().evaluate(&one, &one).unwrap() - 6204.0).abs() < 1e-9);
        let zero = Vector::zeros(1);
        assert_eq!(s12().evaluate(&zero, &zero).unwrap(), 0.0);
        let q_only = QuadraticSupply::new(SymMat::scalar(1.0), Mat::zeros(1, 1), SymMat::zeros(1)).unwrap();
        let two = Vector::from_element(1, 2.0);
        assert_eq!(q_only.evaluate(&two, &Vector::from_element(1, 7.0)).unwrap(), 4.0);
        assert!(s12().evaluate(&Vector::zeros(2), &one).is_err());
    }

    #[test]
    fn rejects_bad_cross_block() {
        assert!(QuadraticSupply::new(SymMat::zeros(1), Mat::zeros(2, 1), SymMat::zeros(1)).is_err());
    }

    #[test]
    fn direct_sum_adds_values() {
        let a = s12();
        let b = s12().mirror();
        let sum = QuadraticSupply::direct_sum(&[&a, &b]);
        let x = Vector::from_column_slice(&[0.3, -1.2]);
        let y = Vector::from_column_slice(&[2.0, 0.7]);
        let direct = a.evaluate(&x.rows(0, 1).into(), &y.rows(0, 1).into()).unwrap()
            + b.evaluate(&x.rows(1, 1).into(), &y.rows(1, 1).into()).unwrap();
        assert!((sum.evaluate(&x, &y).unwrap() - direct).abs() < 1e-9);
    }
}
