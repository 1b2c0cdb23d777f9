//! Dissipativity and robust-stability inequalities, and searches over
//! storage functions and multipliers.

mod sdp;

use std::collections::BTreeMap;

pub use sdp::{DecisionBlock, FeasibilityResult, LmiProblem, SolverOptions, Status, Strictness};

use crate::error::{Error, Result};
use crate::linalg::{self, Definiteness, Mat, SymMat, Tolerance};
use crate::model::{
    close_loop, closed_loop_matrix, link_matrix, well_posedness, InterconnectionSet, NetworkGraph, Plant, QuadraticSupply, StateSpace,
    StorageCertificate, SystemId,
};

/// Dissipation inequality matrix of `x' = A x + B u, y = C x + D u` for
/// storage `x^T P x` and supply `s(u, y)`:
///
/// ```text
/// [ A^T P + P A - C^T R C      P B - C^T S^T - C^T R D      ]
/// [ *                          -Q - S D - D^T S^T - D^T R D ]
/// ```
///
/// The system is strictly dissipative exactly when this is negative definite.
pub fn dissipativity_matrix(sys: &StateSpace, supply: &QuadraticSupply, p: &SymMat) -> Result<SymMat> {
    check_dims(sys, supply, p)?;
    let (a, b, c, d) = (&sys.a, &sys.b, &sys.c, &sys.d);
    let (q, s, r) = (supply.q.as_mat(), &supply.s, supply.r.as_mat());
    let pm = p.as_mat();
    let ct = c.transpose();
    let top_left = a.transpose() * pm + pm * a - &ct * r * c;
    let top_right = pm * b - &ct * s.transpose() - &ct * r * d;
    let sd = s * d;
    let bottom = -q - &sd - sd.transpose() - d.transpose() * r * d;
    let n = sys.n();
    let top = linalg::hstack(n, &[&top_left, &top_right]);
    let bot = linalg::hstack(sys.inputs(), &[&top_right.transpose(), &bottom]);
    Ok(SymMat::symmetrize(&linalg::vstack(n + sys.inputs(), &[&top, &bot])))
}

/// The same matrix assembled as an outer-factor product
/// `(*)^T [[0, P], [P, 0]] (*) - (*)^T [[Q, S], [S^T, R]] (*)`.
pub fn dissipativity_matrix_by_product(sys: &StateSpace, supply: &QuadraticSupply, p: &SymMat) -> Result<SymMat> {
    check_dims(sys, supply, p)?;
    let (n, nu) = (sys.n(), sys.inputs());
    let ident_x = Mat::identity(n, n);
    let ident_u = Mat::identity(nu, nu);
    let state_factor =
        linalg::vstack(n + nu, &[&linalg::hstack(n, &[&ident_x, &Mat::zeros(n, nu)]), &linalg::hstack(n, &[&sys.a, &sys.b])]);
    let io_factor =
        linalg::vstack(n + nu, &[&linalg::hstack(nu, &[&Mat::zeros(nu, n), &ident_u]), &linalg::hstack(sys.outputs(), &[&sys.c, &sys.d])]);
    let zero = Mat::zeros(n, n);
    let storage = linalg::vstack(2 * n, &[&linalg::hstack(n, &[&zero, p.as_mat()]), &linalg::hstack(n, &[p.as_mat(), &zero])]);
    let m = state_factor.transpose() * storage * &state_factor - io_factor.transpose() * supply.matrix().as_mat() * &io_factor;
    Ok(SymMat::symmetrize(&m))
}

/// Largest eigenvalue of the dissipation inequality, with its gate decision.
pub fn dissipativity_residual(sys: &StateSpace, supply: &QuadraticSupply, p: &SymMat, tol: &Tolerance) -> Result<Definiteness> {
    linalg::is_neg_def(&dissipativity_matrix(sys, supply, p)?, tol)
}

fn check_dims(sys: &StateSpace, supply: &QuadraticSupply, p: &SymMat) -> Result<()> {
    if supply.dims() != (sys.inputs(), sys.outputs()) {
        return Err(Error::InvalidInput(format!(
            "supply acts on ({}, {}) but the system has {} inputs and {} outputs",
            supply.dims().0,
            supply.dims().1,
            sys.inputs(),
            sys.outputs()
        )));
    }
    if p.dim() != sys.n() {
        return Err(Error::InvalidInput(format!("storage is {0}x{0}, state dimension is {1}", p.dim(), sys.n())));
    }
    Ok(())
}

/// `A^T P + P A`.
pub fn lyapunov_matrix(a: &Mat, p: &SymMat) -> SymMat {
    SymMat::symmetrize(&(a.transpose() * p.as_mat() + p.as_mat() * a))
}

/// Integral-quadratic multiplier on `(v, w)`. It is the negated supply:
/// the robustness inequalities use `Pi` where dissipation uses `-s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    pub q: SymMat,
    pub s: Mat,
    pub r: SymMat,
}

impl Multiplier {
    pub fn from_supply(s: &QuadraticSupply) -> Self {
        let n = s.neg();
        Multiplier { q: n.q, s: n.s, r: n.r }
    }

    pub fn to_supply(&self) -> QuadraticSupply {
        QuadraticSupply { q: self.q.neg(), s: -&self.s, r: self.r.neg() }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.q.dim(), self.r.dim())
    }

    pub fn matrix(&self) -> SymMat {
        self.to_supply().matrix().neg()
    }

    /// `[H; I]^T Pi [H; I]`, which must be positive semidefinite on every
    /// admissible interconnection.
    pub fn link_form(&self, h: &Mat) -> Result<SymMat> {
        let (nv, nw) = self.dims();
        if h.shape() != (nv, nw) {
            return Err(Error::InvalidInput(format!("interconnection is {}x{}, multiplier expects {nv}x{nw}", h.nrows(), h.ncols())));
        }
        let q = self.q.as_mat();
        let m = h.transpose() * q * h + h.transpose() * &self.s + self.s.transpose() * h + self.r.as_mat();
        Ok(SymMat::symmetrize(&m))
    }

    /// Recognises the swap-neutral shape over a link of sizes `(p, q)`:
    /// `Q = diag(Q_A, -R_A)`, `S = diag(S_A, -S_A^T)`, `R = diag(R_A, -Q_A)`.
    /// Returns `(Q_A, R_A)` when it matches.
    pub fn link_blocks(&self, p: usize, q: usize, tol: &Tolerance) -> Option<(SymMat, SymMat)> {
        if self.dims() != (p + q, q + p) {
            return None;
        }
        let qa = self.q.as_mat().view((0, 0), (p, p)).into_owned();
        let sa = self.s.view((0, 0), (p, q)).into_owned();
        let ra = self.r.as_mat().view((0, 0), (q, q)).into_owned();
        let expected = Multiplier {
            q: SymMat::symmetrize(&linalg::block_diag(&[&qa, &(-&ra)])),
            s: linalg::block_diag(&[&sa, &(-sa.transpose())]),
            r: SymMat::symmetrize(&linalg::block_diag(&[&ra, &(-&qa)])),
        };
        let scale = self.matrix().as_mat().amax().max(f64::MIN_POSITIVE);
        let gap = (expected.matrix().into_mat() - self.matrix().as_mat()).amax();
        (gap <= tol.rank_eps.max(1e-12) * scale).then(|| (SymMat::symmetrize(&qa), SymMat::symmetrize(&ra)))
    }
}

/// Evaluation points of an interconnection set: `(alpha, H)` pairs for the
/// link family, `(index, H)` for a finite set.
pub fn interconnection_samples(hset: &InterconnectionSet) -> Vec<(f64, Mat)> {
    match hset {
        InterconnectionSet::Finite(hs) => hs.iter().enumerate().map(|(i, h)| (i as f64, h.clone())).collect(),
        InterconnectionSet::LinkScaling { p, q } => (0..=20).map(|k| k as f64 / 20.0).map(|a| (a, link_matrix(*p, *q, a))).collect(),
    }
}

/// Per-point outcome of a robustness check.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCheck {
    pub point: f64,
    pub link_form: Definiteness,
    /// `Some(true)` when the closed loop at this point is Hurwitz.
    pub hurwitz: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustCheck {
    pub holds: bool,
    pub storage: Definiteness,
    pub samples: Vec<SampleCheck>,
    pub dissipation: Definiteness,
    /// For a link family with a swap-neutral multiplier, the exact verdict on
    /// the link form over all of `[0, 1]`.
    pub closed_form: Option<bool>,
}

impl RobustCheck {
    pub fn worst_link_margin(&self) -> f64 {
        self.samples.iter().map(|s| s.link_form.margin).fold(f64::INFINITY, f64::min)
    }
}

fn is_hurwitz(a: &Mat) -> bool {
    a.nrows() == 0 || a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

fn link_checks(
    plant: &Plant,
    hset: &InterconnectionSet,
    multiplier: &Multiplier,
    tol: &Tolerance,
) -> Result<(Vec<SampleCheck>, Option<bool>)> {
    let (nv, nw) = hset.dims()?;
    if (nv, nw) != (plant.nv(), plant.nw()) || multiplier.dims() != (nv, nw) {
        return Err(Error::InvalidInput(format!(
            "interconnection {nv}x{nw}, plant {}x{}, multiplier {}x{} disagree",
            plant.nv(),
            plant.nw(),
            multiplier.dims().0,
            multiplier.dims().1
        )));
    }
    let mut samples = Vec::new();
    for (point, h) in interconnection_samples(hset) {
        let link_form = linalg::is_pos_semidef(&multiplier.link_form(&h)?, tol)?;
        let hurwitz = close_loop(&plant.a, &plant.b, &plant.c, &plant.d, &h, tol).ok().map(|a| is_hurwitz(&a));
        samples.push(SampleCheck { point, link_form, hurwitz });
    }
    let closed_form = match hset {
        InterconnectionSet::LinkScaling { p, q } => multiplier.link_blocks(*p, *q, tol).map(|(qa, ra)| {
            // The link form is diag((1 - a^2) R_A, -(1 - a^2) Q_A).
            let r_ok = linalg::is_pos_semidef(&ra, tol).map(|d| d.holds).unwrap_or(false);
            let q_ok = linalg::is_pos_semidef(&qa.neg(), tol).map(|d| d.holds).unwrap_or(false);
            r_ok && q_ok
        }),
        InterconnectionSet::Finite(_) => None,
    };
    Ok((samples, closed_form))
}

/// Robust stability of `G0` closed through every `H` of the set, certified
/// by a storage `P` and a multiplier.
pub fn robust_stability_check(
    g0: &StateSpace,
    hset: &InterconnectionSet,
    p: &SymMat,
    multiplier: &Multiplier,
    tol: &Tolerance,
) -> Result<RobustCheck> {
    let plant = Plant {
        a: g0.a.clone(),
        b: g0.b.clone(),
        e: Mat::zeros(g0.n(), 0),
        c: g0.c.clone(),
        d: g0.d.clone(),
        dw: Mat::zeros(g0.outputs(), 0),
        f: Mat::zeros(0, g0.n()),
        k: Mat::zeros(0, g0.inputs()),
        l: Mat::zeros(0, 0),
    };
    robust_dissipativity_check(&plant, hset, p, multiplier, &QuadraticSupply::zeros(0, 0), tol)
}

/// Robust dissipativity from `d` to `z` with respect to `perf`, for `G0`
/// closed through every `H` of the set.
pub fn robust_dissipativity_check(
    plant: &Plant,
    hset: &InterconnectionSet,
    p: &SymMat,
    multiplier: &Multiplier,
    perf: &QuadraticSupply,
    tol: &Tolerance,
) -> Result<RobustCheck> {
    plant.validate()?;
    let storage = linalg::is_pos_def(p, tol)?;
    let (samples, closed_form) = link_checks(plant, hset, multiplier, tol)?;
    let supply = QuadraticSupply::direct_sum(&[&multiplier.to_supply(), perf]);
    let dissipation = dissipativity_residual(&plant.stacked(), &supply, p, tol)?;
    let links_ok = closed_form.unwrap_or_else(|| samples.iter().all(|s| s.link_form.holds));
    let holds = storage.holds && dissipation.holds && links_ok;
    Ok(RobustCheck { holds, storage, samples, dissipation, closed_form })
}

#[derive(Debug, Clone)]
pub struct LyapunovSearch {
    pub status: Status,
    pub certificate: Option<StorageCertificate>,
    pub result: FeasibilityResult,
}

/// Searches a block-diagonal storage `P = diag(P_i) > 0` with
/// `A_cl^T P + P A_cl < 0` for the autonomous network.
pub fn find_additive_lyapunov(net: &NetworkGraph, tol: &Tolerance, opts: &SolverOptions) -> Result<LyapunovSearch> {
    let wp = well_posedness(net, tol);
    if !wp.holds {
        return Err(Error::IllPosed { condition: wp.condition });
    }
    let net = net.without_exogenous();
    let a_cl = closed_loop_matrix(&net, tol)?;
    let ids = net.ids();
    let dims: Vec<usize> = ids.iter().map(|&i| net.systems()[&i].n()).collect();
    let blocks: Vec<DecisionBlock> = ids.iter().zip(&dims).map(|(id, &n)| DecisionBlock::symmetric(&format!("P_{id}"), n)).collect();
    let mut labels: Vec<(String, Strictness)> = ids.iter().map(|id| (format!("storage {id} positive"), Strictness::Strict)).collect();
    labels.push(("network dissipation".into(), Strictness::Strict));
    let a_ref = &a_cl;
    let problem = LmiProblem::new(blocks, labels, move |vals| {
        let mut out: Vec<SymMat> = vals.iter().map(|p| SymMat::symmetrize(&-p)).collect();
        let refs: Vec<&Mat> = vals.iter().collect();
        let p = SymMat::symmetrize(&linalg::block_diag(&refs));
        out.push(lyapunov_matrix(a_ref, &p));
        out
    });
    let result = problem.solve(tol, opts)?;
    let certificate = if result.status == Status::Feasible {
        let blocks: BTreeMap<SystemId, SymMat> = ids.iter().zip(&result.witness).map(|(&id, p)| (id, SymMat::symmetrize(p))).collect();
        Some(net.certify(blocks, tol)?)
    } else {
        None
    };
    Ok(LyapunovSearch { status: result.status, certificate, result })
}

/// Parametrisation of the multiplier being searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierStructure {
    /// Every block free.
    Full,
    /// `Pi = -(s_1 (+) mirror(s_1))` with `s_1` acting on the first `v_first`
    /// inputs and `w_first` outputs; the remaining channels carry the mirror.
    Neutral { v_first: usize, w_first: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StorageSpec {
    Fixed(SymMat),
    /// Free block-diagonal storage with the given block sizes.
    Free(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct MultiplierSearch {
    pub status: Status,
    pub multiplier: Option<Multiplier>,
    pub storage: Option<SymMat>,
    pub check: Option<RobustCheck>,
    pub result: FeasibilityResult,
}

/// Searches a multiplier (and optionally the storage) that certifies robust
/// dissipativity of `plant` over `hset` with respect to `perf`.
pub fn find_multiplier(
    plant: &Plant,
    hset: &InterconnectionSet,
    storage: &StorageSpec,
    perf: &QuadraticSupply,
    structure: MultiplierStructure,
    tol: &Tolerance,
    opts: &SolverOptions,
) -> Result<MultiplierSearch> {
    plant.validate()?;
    let (nv, nw) = (plant.nv(), plant.nw());
    if hset.dims()? != (nv, nw) {
        return Err(Error::InvalidInput("interconnection set does not match the plant channels".into()));
    }
    if perf.dims() != (plant.nd(), plant.nz()) {
        return Err(Error::InvalidInput("performance supply does not match the exogenous channel".into()));
    }
    let mut blocks = match structure {
        MultiplierStructure::Full => {
            vec![DecisionBlock::symmetric("Q", nv), DecisionBlock::full("S", nv, nw), DecisionBlock::symmetric("R", nw)]
        }
        MultiplierStructure::Neutral { v_first, w_first } => {
            if v_first + w_first != nv || nv != nw {
                return Err(Error::InvalidInput(format!(
                    "neutral multiplier needs channels ({v_first} + {w_first}) on both sides, plant has ({nv}, {nw})"
                )));
            }
            vec![DecisionBlock::symmetric("Q", v_first), DecisionBlock::full("S", v_first, w_first), DecisionBlock::symmetric("R", w_first)]
        }
    };
    let storage_blocks = match storage {
        StorageSpec::Fixed(p) => {
            if p.dim() != plant.n() {
                return Err(Error::InvalidInput("fixed storage does not match the plant state".into()));
            }
            0
        }
        StorageSpec::Free(sizes) => {
            if sizes.iter().sum::<usize>() != plant.n() {
                return Err(Error::InvalidInput("storage block sizes do not add up to the plant state".into()));
            }
            for (i, &n) in sizes.iter().enumerate() {
                blocks.push(DecisionBlock::symmetric(&format!("P_{i}"), n));
            }
            sizes.len()
        }
    };
    let samples = interconnection_samples(hset);
    let mut labels: Vec<(String, Strictness)> =
        samples.iter().map(|(pt, _)| (format!("link form at {pt}"), Strictness::NonStrict)).collect();
    labels.push(("robust dissipation".into(), Strictness::Strict));
    for i in 0..storage_blocks {
        labels.push((format!("storage block {i} positive"), Strictness::Strict));
    }
    let stacked = plant.stacked();
    let assemble = move |vals: &[Mat]| -> (Multiplier, SymMat) {
        let s1 = QuadraticSupply { q: SymMat::symmetrize(&vals[0]), s: vals[1].clone(), r: SymMat::symmetrize(&vals[2]) };
        let multiplier = match structure {
            MultiplierStructure::Full => Multiplier { q: s1.q, s: s1.s, r: s1.r },
            MultiplierStructure::Neutral { .. } => Multiplier::from_supply(&QuadraticSupply::direct_sum(&[&s1, &s1.mirror()])),
        };
        let p = match storage {
            StorageSpec::Fixed(p) => p.clone(),
            StorageSpec::Free(_) => {
                let refs: Vec<&Mat> = vals[3..].iter().collect();
                SymMat::symmetrize(&linalg::block_diag(&refs))
            }
        };
        (multiplier, p)
    };
    let assemble_ref = &assemble;
    let samples_ref = &samples;
    let stacked_ref = &stacked;
    let problem = LmiProblem::new(blocks, labels, move |vals| {
        let (multiplier, p) = assemble_ref(vals);
        let mut out: Vec<SymMat> = samples_ref.iter().map(|(_, h)| multiplier.link_form(h).expect("shapes checked").neg()).collect();
        let supply = QuadraticSupply::direct_sum(&[&multiplier.to_supply(), perf]);
        out.push(dissipativity_matrix(stacked_ref, &supply, &p).expect("shapes checked"));
        for pb in &vals[3..] {
            out.push(SymMat::symmetrize(&-pb));
        }
        out
    });
    let mut result = problem.solve(tol, opts)?;
    let (multiplier, p) = assemble(&result.witness);
    let check = robust_dissipativity_check(plant, hset, &p, &multiplier, perf, tol)?;
    if result.status == Status::Feasible && !check.holds {
        result.status = Status::Undecided;
    }
    let found = result.status == Status::Feasible;
    Ok(MultiplierSearch {
        status: result.status,
        multiplier: found.then_some(multiplier),
        storage: found.then_some(p),
        check: found.then_some(check),
        result,
    })
}
