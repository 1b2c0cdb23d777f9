//! Interconnection-neutral supply pairs for a system split in two.
//!
//! Starting from a storage that makes the interconnection of two systems
//! strictly dissipative, each side's dissipation inequality is reduced to a
//! quadratic form on its port signals; blending the two forms gives a supply
//! pair `(s, mirror(s))` under which both sides are dissipative on their own.

mod rank;
mod workspace;

pub use rank::{extend_rank_deficient, GammaRecord, RankFactorization};
pub use workspace::{ReducedBlocks, SideWorkspace, TwoSystemWorkspace};

use crate::error::{Error, Result};
use crate::linalg::{self, Definiteness, Mat, SymMat, Tolerance};
use crate::lmi::{dissipativity_residual, lyapunov_matrix};
use crate::model::{close_loop, link_matrix, LtiSystem, Plant, QuadraticSupply};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionConfig {
    /// Blend between the two sides' reduced forms, in `(0, 1)`.
    pub alpha: f64,
    /// Growth factor of the regularisation search, `> 1`.
    pub gamma_growth: f64,
    pub gamma_doublings: u32,
    pub tol: Tolerance,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig { alpha: 0.5, gamma_growth: 2.0, gamma_doublings: 60, tol: Tolerance::default() }
    }
}

impl DecompositionConfig {
    pub fn new(alpha: f64, gamma_growth: f64, tol: Tolerance) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(gamma_growth > 1.0 && gamma_growth.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma growth must exceed 1, got {gamma_growth}")));
        }
        Ok(DecompositionConfig { alpha, gamma_growth, gamma_doublings: 60, tol })
    }
}

/// Supplies on each side's exogenous channel `(d, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSupplies {
    pub first: QuadraticSupply,
    pub second: QuadraticSupply,
}

impl ExternalSupplies {
    /// Empty supplies for systems without exogenous channels.
    pub fn none() -> Self {
        ExternalSupplies { first: QuadraticSupply::zeros(0, 0), second: QuadraticSupply::zeros(0, 0) }
    }
}

/// A-posteriori record: the mirror identity and both local dissipation margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairVerification {
    pub neutrality_residual: f64,
    pub first: Definiteness,
    pub second: Definiteness,
}

impl PairVerification {
    pub fn holds(&self) -> bool {
        self.neutrality_residual == 0.0 && self.first.holds && self.second.holds
    }
}

/// `forward` acts on the first side's `(v, w)`, `backward` on the second's.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSupplyPair {
    pub forward: QuadraticSupply,
    pub backward: QuadraticSupply,
    pub verification: PairVerification,
    pub gamma: Option<GammaRecord>,
}

impl EdgeSupplyPair {
    /// The same pair seen from the second side.
    pub fn swapped(&self) -> EdgeSupplyPair {
        EdgeSupplyPair {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
            verification: PairVerification {
                neutrality_residual: self.verification.neutrality_residual,
                first: self.verification.second,
                second: self.verification.first,
            },
            gamma: self.gamma,
        }
    }
}

/// Certificate that each supply is nonpositive when its first argument vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCertificate {
    pub forward: Definiteness,
    pub backward: Definiteness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignStructuredPair {
    pub pair: EdgeSupplyPair,
    pub sign: SignCertificate,
}

fn single_port_plant(g: &LtiSystem) -> Result<Plant> {
    g.sole_port()?;
    Ok(g.plant())
}

pub(crate) fn workspace_from_plants(
    plants: (Plant, Plant),
    storages: (&SymMat, &SymMat),
    external: &ExternalSupplies,
    kernels: Option<(Mat, Mat)>,
    tol: &Tolerance,
) -> Result<TwoSystemWorkspace> {
    let (k1, k2) = match kernels {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let first = SideWorkspace::new(plants.0, storages.0.clone(), external.first.clone(), k1, tol)?;
    let second = SideWorkspace::new(plants.1, storages.1.clone(), external.second.clone(), k2, tol)?;
    TwoSystemWorkspace::new(first, second, tol)
}

/// Reduces both sides of `g1 <-> g2`; each system must have exactly one port.
pub fn build_workspace(
    g1: &LtiSystem,
    g2: &LtiSystem,
    p1: &SymMat,
    p2: &SymMat,
    external: &ExternalSupplies,
    cfg: &DecompositionConfig,
) -> Result<TwoSystemWorkspace> {
    workspace_from_plants((single_port_plant(g1)?, single_port_plant(g2)?), (p1, p2), external, None, &cfg.tol)
}

/// As [`build_workspace`] with caller-chosen orthonormal kernel bases.
pub fn build_workspace_with_kernels(
    g1: &LtiSystem,
    g2: &LtiSystem,
    p1: &SymMat,
    p2: &SymMat,
    external: &ExternalSupplies,
    kernels: (Mat, Mat),
    cfg: &DecompositionConfig,
) -> Result<TwoSystemWorkspace> {
    workspace_from_plants((single_port_plant(g1)?, single_port_plant(g2)?), (p1, p2), external, Some(kernels), &cfg.tol)
}

pub(crate) fn verify_pair(
    first: (&Plant, &SymMat, &QuadraticSupply),
    second: (&Plant, &SymMat, &QuadraticSupply),
    forward: &QuadraticSupply,
    backward: &QuadraticSupply,
    tol: &Tolerance,
) -> Result<PairVerification> {
    let local = |(plant, p, ext): (&Plant, &SymMat, &QuadraticSupply), s: &QuadraticSupply| {
        dissipativity_residual(&plant.stacked(), &QuadraticSupply::direct_sum(&[s, ext]), p, tol)
    };
    Ok(PairVerification {
        neutrality_residual: forward.neutrality_residual(backward),
        first: local(first, forward)?,
        second: local(second, backward)?,
    })
}

fn require_verified(v: &PairVerification) -> Result<()> {
    if !v.first.holds {
        return Err(Error::hypothesis("local dissipation of the first side", v.first.margin));
    }
    if !v.second.holds {
        return Err(Error::hypothesis("local dissipation of the second side", v.second.margin));
    }
    Ok(())
}

/// The neutral pair at `cfg.alpha`, verified on both sides.
pub fn construct_neutral_pair(ws: &TwoSystemWorkspace, cfg: &DecompositionConfig) -> Result<EdgeSupplyPair> {
    let forward = ws.multiplier_at(cfg.alpha).to_supply();
    let backward = forward.mirror();
    let (a, b) = (&ws.first, &ws.second);
    let verification =
        verify_pair((&a.plant, &a.storage, &a.external), (&b.plant, &b.storage, &b.external), &forward, &backward, &cfg.tol)?;
    require_verified(&verification)?;
    Ok(EdgeSupplyPair { forward, backward, verification, gamma: None })
}

/// Closed-loop matrix of two single-port systems joined by `v_1 = w_2`, `v_2 = w_1`.
pub fn two_system_closed_loop(g1: &LtiSystem, g2: &LtiSystem, tol: &Tolerance) -> Result<Mat> {
    let joint = Plant::block_diag(&[&single_port_plant(g1)?, &single_port_plant(g2)?]);
    let (nv1, nv2) = (joint.nv() - g2.sole_port()?.1.nv(), g2.sole_port()?.1.nv());
    close_loop(&joint.a, &joint.b, &joint.c, &joint.d, &link_matrix(nv1, nv2, 1.0), tol)
}

/// Neutral pair for an autonomous two-system loop; the exogenous channels
/// are dropped and the storage is checked to be a Lyapunov function first.
pub fn construct_autonomous(g1: &LtiSystem, g2: &LtiSystem, p1: &SymMat, p2: &SymMat, cfg: &DecompositionConfig) -> Result<EdgeSupplyPair> {
    let (g1, g2) = (g1.without_exogenous(), g2.without_exogenous());
    check_lyapunov(&g1, &g2, p1, p2, &cfg.tol)?;
    let ws = build_workspace(&g1, &g2, p1, p2, &ExternalSupplies::none(), cfg)?;
    construct_neutral_pair(&ws, cfg)
}

pub(crate) fn check_lyapunov(g1: &LtiSystem, g2: &LtiSystem, p1: &SymMat, p2: &SymMat, tol: &Tolerance) -> Result<()> {
    for p in [p1, p2] {
        let d = linalg::is_pos_def(p, tol)?;
        if !d.holds {
            return Err(Error::hypothesis("storage positive definite", d.margin));
        }
    }
    let a_cl = two_system_closed_loop(g1, g2, tol)?;
    let p = SymMat::symmetrize(&linalg::block_diag(&[p1.as_mat(), p2.as_mat()]));
    let d = linalg::is_neg_def(&lyapunov_matrix(&a_cl, &p), tol)?;
    if !d.holds {
        return Err(Error::NotALyapunovFunction { margin: d.margin });
    }
    Ok(())
}

/// Neutral pair whose supplies are nonpositive whenever their first
/// argument vanishes. Requires zero feedthrough and, with exogenous
/// channels present, `K = L = 0`. Rank-deficient outputs go through the
/// extension.
pub fn construct_sign_structured(
    g1: &LtiSystem,
    g2: &LtiSystem,
    p1: &SymMat,
    p2: &SymMat,
    external: &ExternalSupplies,
    cfg: &DecompositionConfig,
) -> Result<SignStructuredPair> {
    let (pl1, pl2) = (single_port_plant(g1)?, single_port_plant(g2)?);
    for pl in [&pl1, &pl2] {
        if pl.d.amax() != 0.0 || pl.k.amax() != 0.0 || pl.l.amax() != 0.0 {
            return Err(Error::PreconditionFailed("sign structure needs D = K = L = 0".into()));
        }
    }
    let full_rank = linalg::rank(&pl1.c, &cfg.tol) == pl1.nw() && linalg::rank(&pl2.c, &cfg.tol) == pl2.nw();
    let pair = if full_rank {
        let ws = workspace_from_plants((pl1, pl2), (p1, p2), external, None, &cfg.tol)?;
        for side in [&ws.first, &ws.second] {
            let r = linalg::is_neg_semidef(&side.reduced.r, &cfg.tol)?;
            if !r.holds {
                return Err(Error::hypothesis("reduced output block nonpositive", r.margin));
            }
            let q = linalg::is_pos_semidef(&side.reduced.q, &cfg.tol)?;
            if !q.holds {
                return Err(Error::hypothesis("reduced input block nonnegative", q.margin));
            }
        }
        construct_neutral_pair(&ws, cfg)?
    } else {
        // The extension adds -gamma I to the output block and +gamma I to
        // the input block, so the sign structure carries over.
        extend_rank_deficient(g1, g2, p1, p2, external, cfg)?
    };
    let sign = SignCertificate {
        forward: linalg::is_neg_semidef(&pair.forward.r, &cfg.tol)?,
        backward: linalg::is_neg_semidef(&pair.backward.r, &cfg.tol)?,
    };
    if !sign.forward.holds || !sign.backward.holds {
        return Err(Error::hypothesis("supply nonpositive on zero input", sign.forward.margin.max(sign.backward.margin)));
    }
    Ok(SignStructuredPair { pair, sign })
}
