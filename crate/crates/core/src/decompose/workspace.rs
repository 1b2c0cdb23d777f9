use crate::error::{Error, Result};
use crate::linalg::{self, Definiteness, Mat, SymMat, Tolerance};
use crate::lmi::Multiplier;
use crate::model::{Plant, QuadraticSupply};

/// One side of a two-system split: its plant, storage and exogenous supply,
/// together with every intermediate of the output-coordinate reduction.
#[derive(Debug, Clone)]
pub struct SideWorkspace {
    pub plant: Plant,
    pub storage: SymMat,
    pub external: QuadraticSupply,
    /// Orthonormal basis of `Ker C`.
    pub kernel: Mat,
    /// `[C; V^T]`.
    pub output_basis: Mat,
    /// `A^T P + P A + F^T R_p F` with `(Q_p, S_p, R_p)` the negated exogenous supply.
    pub dissipation_rate: Mat,
    pub input_coupling: Mat,
    pub exogenous_coupling: Mat,
    pub input_exogenous_feed: Mat,
    pub exogenous_feed: Mat,
    /// `(V^T M V)^{-1}`.
    pub kernel_pivot_inverse: Mat,
    /// Negative definite Schur block of the exogenous channel.
    pub exogenous_pivot: SymMat,
    pub exogenous_cross: Mat,
    pub exogenous_state: Mat,
    /// Contributions after eliminating the kernel directions.
    pub kernel_part: ReducedBlocks,
    /// Contributions after eliminating the exogenous channel.
    pub exogenous_part: ReducedBlocks,
    pub total: ReducedBlocks,
    /// The total mapped to output coordinates: `q` on `v`, `s` between `v`
    /// and `y = C x`, `r` on `y`.
    pub reduced: QuadraticSupply,
    pub kernel_margin: Definiteness,
    pub exogenous_margin: Definiteness,
}

/// State block, input/state block and input block of a reduced form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBlocks {
    pub state: SymMat,
    pub mixed: Mat,
    pub input: SymMat,
}

impl SideWorkspace {
    /// `kernel` overrides the default kernel basis; it must be orthonormal
    /// and span `Ker C`.
    pub fn new(plant: Plant, storage: SymMat, external: QuadraticSupply, kernel: Option<Mat>, tol: &Tolerance) -> Result<Self> {
        plant.validate()?;
        let (n, nv, nw, nd, nz) = (plant.n(), plant.nv(), plant.nw(), plant.nd(), plant.nz());
        if storage.dim() != n {
            return Err(Error::InvalidInput(format!("storage is {0}x{0}, plant has {1} states", storage.dim(), n)));
        }
        if external.dims() != (nd, nz) {
            return Err(Error::InvalidInput(format!(
                "exogenous supply acts on ({}, {}), plant has ({nd}, {nz})",
                external.dims().0,
                external.dims().1
            )));
        }
        if plant.dw.amax() > 0.0 {
            return Err(Error::PreconditionFailed("exogenous input must not feed the interconnection output".into()));
        }
        if linalg::rank(&plant.c, tol) < nw {
            return Err(Error::RankAssumption(format!("output matrix of rank {} has {nw} rows", linalg::rank(&plant.c, tol))));
        }
        let kernel = match kernel {
            None => linalg::kernel_basis(&plant.c, tol),
            Some(v) => {
                if v.shape() != (n, n - nw) {
                    return Err(Error::InvalidBasis(format!("kernel basis must be {}x{}", n, n - nw)));
                }
                linalg::orth_complement(&v, tol)?;
                if (&plant.c * &v).amax() > 1e-8 * (1.0 + plant.c.amax()) {
                    return Err(Error::InvalidBasis("columns do not lie in the kernel of C".into()));
                }
                v
            }
        };

        let (qp, sp, rp) = (external.q.neg().into_mat(), -&external.s, external.r.neg().into_mat());
        let (a, b, e, f, k, l) = (&plant.a, &plant.b, &plant.e, &plant.f, &plant.k, &plant.l);
        let p = storage.as_mat();
        let (ft, kt, lt) = (f.transpose(), k.transpose(), l.transpose());
        let m = SymMat::symmetrize(&(a.transpose() * p + p * a + &ft * &rp * f)).into_mat();
        let n_a = p * b + &ft * &rp * k;
        let n_b = p * e + &ft * sp.transpose() + &ft * &rp * l;
        let n_c = &kt * sp.transpose() + &kt * &rp * l;
        let n_d = SymMat::symmetrize(&(&qp + &sp * l + &lt * sp.transpose() + &lt * &rp * l)).into_mat();

        let pivot = SymMat::symmetrize(&(kernel.transpose() * &m * &kernel));
        let kernel_margin = linalg::is_neg_def(&pivot, tol)?;
        if !kernel_margin.holds {
            return Err(Error::hypothesis("dissipation rate negative on Ker C", kernel_margin.margin));
        }
        let x = linalg::inverse(pivot.as_mat(), tol)?;
        let proj = &kernel * &x * kernel.transpose();

        let z = SymMat::symmetrize(&(&n_d - n_b.transpose() * &proj * &n_b));
        let exogenous_margin = linalg::is_neg_def(&z, tol)?;
        if !exogenous_margin.holds {
            return Err(Error::hypothesis("exogenous Schur block negative", exogenous_margin.margin));
        }
        let z_cross = &n_c - n_a.transpose() * &proj * &n_b;
        let z_state = n_b.transpose() - n_b.transpose() * &proj * &m;
        let z_inv = linalg::inverse(z.as_mat(), tol)?;

        let kernel_part = ReducedBlocks {
            state: SymMat::symmetrize(&(&m - &m * &proj * &m)),
            mixed: n_a.transpose() - n_a.transpose() * &proj * &m,
            input: SymMat::symmetrize(&(&kt * &rp * k - n_a.transpose() * &proj * &n_a)),
        };
        let exogenous_part = ReducedBlocks {
            state: SymMat::symmetrize(&-(z_state.transpose() * &z_inv * &z_state)),
            mixed: -(&z_cross * &z_inv * &z_state),
            input: SymMat::symmetrize(&-(&z_cross * &z_inv * z_cross.transpose())),
        };
        let total = ReducedBlocks {
            state: kernel_part.state.add(&exogenous_part.state),
            mixed: &kernel_part.mixed + &exogenous_part.mixed,
            input: kernel_part.input.add(&exogenous_part.input),
        };

        let output_basis = linalg::vstack(n, &[&plant.c, &kernel.transpose()]);
        let basis_inv = linalg::inverse(&output_basis, tol)?;
        let state_out = basis_inv.transpose() * total.state.as_mat() * &basis_inv;
        let mixed_out = &total.mixed * &basis_inv;
        let reduced = QuadraticSupply {
            q: total.input.clone(),
            s: mixed_out.columns(0, nw).into_owned(),
            r: SymMat::symmetrize(&state_out.view((0, 0), (nw, nw)).into_owned()),
        };
        debug_assert_eq!(reduced.s.shape(), (nv, nw));

        Ok(SideWorkspace {
            plant,
            storage,
            external,
            kernel,
            output_basis,
            dissipation_rate: m,
            input_coupling: n_a,
            exogenous_coupling: n_b,
            input_exogenous_feed: n_c,
            exogenous_feed: n_d,
            kernel_pivot_inverse: x,
            exogenous_pivot: z,
            exogenous_cross: z_cross,
            exogenous_state: z_state,
            kernel_part,
            exogenous_part,
            total,
            reduced,
            kernel_margin,
            exogenous_margin,
        })
    }

    /// The reduced form evaluated on `(v, w)` with `y = w - D v`: blocks
    /// `(Q - S D - D^T S^T + D^T R D, S - D^T R, R)`.
    fn with_feedthrough(&self) -> QuadraticSupply {
        let d = &self.plant.d;
        let r = self.reduced.r.as_mat();
        let sd = &self.reduced.s * d;
        QuadraticSupply {
            q: SymMat::symmetrize(&(self.reduced.q.as_mat() - &sd - sd.transpose() + d.transpose() * r * d)),
            s: &self.reduced.s - d.transpose() * r,
            r: self.reduced.r.clone(),
        }
    }
}

/// Both sides of a split joined by `v_1 = w_2`, `v_2 = w_1`.
#[derive(Debug, Clone)]
pub struct TwoSystemWorkspace {
    pub first: SideWorkspace,
    pub second: SideWorkspace,
    /// Sum of both reduced forms on the interconnected signals `(v_2, v_1)`.
    pub coupling: SymMat,
    pub coupling_margin: Definiteness,
}

impl TwoSystemWorkspace {
    pub fn new(first: SideWorkspace, second: SideWorkspace, tol: &Tolerance) -> Result<Self> {
        let (p1, p2) = (&first.plant, &second.plant);
        if p1.nv() != p2.nw() || p1.nw() != p2.nv() {
            return Err(Error::InvalidInput(format!(
                "link mismatch: first side is {}x{} (v x w), second side {}x{}",
                p1.nv(),
                p1.nw(),
                p2.nv(),
                p2.nw()
            )));
        }
        let f1 = first.with_feedthrough();
        let f2 = second.with_feedthrough();
        // Variables (v_2, v_1) = (w_1, w_2): first side sees (v_1, y_1 = v_2 - D_1 v_1),
        // second side sees (v_2, y_2 = v_1 - D_2 v_2).
        let top_left = f2.q.add(&f1.r);
        let top_right = &f2.s + f1.s.transpose();
        let bottom = f1.q.add(&f2.r);
        let nw1 = p1.nw();
        let top = linalg::hstack(nw1, &[top_left.as_mat(), &top_right]);
        let bot = linalg::hstack(p1.nv(), &[&top_right.transpose(), bottom.as_mat()]);
        let coupling = SymMat::symmetrize(&linalg::vstack(nw1 + p1.nv(), &[&top, &bot]));
        let coupling_margin = linalg::is_neg_def(&coupling, tol)?;
        if !coupling_margin.holds {
            return Err(Error::hypothesis("coupled reduced form negative", coupling_margin.margin));
        }
        Ok(TwoSystemWorkspace { first, second, coupling, coupling_margin })
    }

    /// The multiplier on the first side's `(v_1, w_1)` for a given blend
    /// `alpha`; `alpha` outside `(0, 1)` is accepted for diagnostics.
    /// It blends the first side's negated reduced form with the second
    /// side's form read across the link.
    pub fn multiplier_at(&self, alpha: f64) -> Multiplier {
        let f1 = self.first.with_feedthrough();
        let f2 = self.second.with_feedthrough();
        let beta = 1.0 - alpha;
        Multiplier {
            q: f1.q.scaled(-alpha).add(&f2.r.scaled(beta)),
            s: &f1.s * -alpha + f2.s.transpose() * beta,
            r: f1.r.scaled(-alpha).add(&f2.q.scaled(beta)),
        }
    }
}
