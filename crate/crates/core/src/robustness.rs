//! Stability certificates that survive scaling a link by any `alpha` in
//! `[0, 1]`, which covers removing a link or a whole system.

use std::collections::BTreeMap;

use crate::decompose::{construct_sign_structured, DecompositionConfig, ExternalSupplies};
use crate::error::{Error, Result};
use crate::linalg::{self, Definiteness, Mat, SymMat, Tolerance};
use crate::lmi::dissipativity_residual;
use crate::model::{close_loop, link_matrix, NetworkGraph, Plant, QuadraticSupply, StateSpace, StorageCertificate, SystemId};
use crate::netgraph::{is_acyclic, isolate_system, lump, split_at_edge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subject {
    Edge(SystemId, SystemId),
    System(SystemId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCertificate {
    pub subject: Subject,
    /// Relative gap between the second supply and the mirror of the first.
    pub neutrality_residual: f64,
    pub neutral: bool,
    /// Each supply's block on its second argument must be nonpositive.
    pub first_sign: Definiteness,
    pub second_sign: Definiteness,
    pub storage: Definiteness,
    /// Dissipation of the uncoupled pair under the sum of both supplies.
    pub dissipation: Definiteness,
    /// Direct check: the closed loop at each sampled `alpha` is Hurwitz.
    pub samples: Vec<(f64, bool)>,
    pub conclusion: bool,
    /// Set when the inequality argument and the direct check disagree.
    pub discrepancy: Option<String>,
}

fn is_hurwitz(a: &Mat) -> bool {
    a.nrows() == 0 || a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Conditions for stability under `v_A = alpha w_B`, `v_B = alpha w_A` for
/// all `alpha` in `[0, 1]`. `plant` is the uncoupled pair with
/// `v = (v_A, v_B)` and `w = (w_A, w_B)`; `s_a` acts on `(v_A, w_A)` and
/// `s_b` on `(v_B, w_B)`.
pub fn link_scaling_certificate(
    subject: Subject,
    plant: &Plant,
    s_a: &QuadraticSupply,
    s_b: &QuadraticSupply,
    p: &SymMat,
    tol: &Tolerance,
) -> Result<RobustnessCertificate> {
    let (pa, qa) = s_a.dims();
    if s_b.dims() != (qa, pa) || plant.nv() != pa + qa || plant.nw() != qa + pa {
        return Err(Error::InvalidInput("supplies do not match the link channels".into()));
    }
    let dissipation = dissipativity_residual(&plant.interconnection(), &QuadraticSupply::direct_sum(&[s_a, s_b]), p, tol)?;
    if !dissipation.holds {
        return Err(Error::PreconditionFailed(format!(
            "uncoupled pair is not strictly dissipative under the supplies (margin {:e})",
            dissipation.margin
        )));
    }
    let neutrality_residual = s_a.neutrality_residual(s_b);
    let neutral = neutrality_residual <= tol.rank_eps;
    let first_sign = linalg::is_neg_semidef(&s_a.r, tol)?;
    let second_sign = linalg::is_neg_semidef(&s_b.r, tol)?;
    let storage = linalg::is_pos_def(p, tol)?;
    let conclusion = neutral && first_sign.holds && second_sign.holds && storage.holds;
    let mut samples = Vec::new();
    for k in 0..=10 {
        let alpha = k as f64 / 10.0;
        let h = link_matrix(pa, qa, alpha);
        let stable = close_loop(&plant.a, &plant.b, &plant.c, &plant.d, &h, tol).map(|a| is_hurwitz(&a)).unwrap_or(false);
        samples.push((alpha, stable));
    }
    let discrepancy = (conclusion && samples.iter().any(|(_, s)| !s)).then(|| {
        let bad: Vec<String> = samples.iter().filter(|(_, s)| !s).map(|(a, _)| format!("{a}")).collect();
        format!("certificate holds but the closed loop is not Hurwitz at alpha = {}", bad.join(", "))
    });
    Ok(RobustnessCertificate {
        subject,
        neutrality_residual,
        neutral,
        first_sign,
        second_sign,
        storage,
        dissipation,
        samples,
        conclusion,
        discrepancy,
    })
}

fn require_no_feedthrough(net: &NetworkGraph) -> Result<()> {
    if net.has_feedthrough() {
        return Err(Error::PreconditionFailed("removal certificates need zero feedthrough on every link".into()));
    }
    Ok(())
}

/// Certificate for removing each undirected link of an acyclic network.
pub fn edge_removal_survey(
    net: &NetworkGraph,
    cert: &StorageCertificate,
    cfg: &DecompositionConfig,
) -> Result<BTreeMap<(SystemId, SystemId), RobustnessCertificate>> {
    let net = net.without_exogenous();
    require_no_feedthrough(&net)?;
    if !is_acyclic(&net) {
        return Err(Error::NotAcyclic);
    }
    net.undirected_edges().into_iter().map(|e| Ok((e, edge_removal_certificate(&net, cert, e, cfg)?))).collect()
}

/// Certificate for removing the single link `edge` of an acyclic network.
pub fn edge_removal_certificate(
    net: &NetworkGraph,
    cert: &StorageCertificate,
    edge: (SystemId, SystemId),
    cfg: &DecompositionConfig,
) -> Result<RobustnessCertificate> {
    let net = net.without_exogenous();
    require_no_feedthrough(&net)?;
    let split = split_at_edge(&net, edge)?;
    let plus = lump(&net, &split.plus)?;
    let minus = lump(&net, &split.minus)?;
    let p_plus = cert.stacked(&split.plus.iter().copied().collect::<Vec<_>>())?;
    let p_minus = cert.stacked(&split.minus.iter().copied().collect::<Vec<_>>())?;
    let signed = construct_sign_structured(&plus, &minus, &p_plus, &p_minus, &ExternalSupplies::none(), cfg)?;
    let plant = Plant::block_diag(&[&plus.plant(), &minus.plant()]);
    let p = SymMat::symmetrize(&linalg::block_diag(&[p_plus.as_mat(), p_minus.as_mat()]));
    link_scaling_certificate(Subject::Edge(edge.0, edge.1), &plant, &signed.pair.forward, &signed.pair.backward, &p, &cfg.tol)
}

/// Certificate for disconnecting system `i` together with all its links;
/// cycles are allowed.
pub fn system_removal_certificate(
    net: &NetworkGraph,
    cert: &StorageCertificate,
    i: SystemId,
    cfg: &DecompositionConfig,
) -> Result<RobustnessCertificate> {
    net.system(i)?;
    let net = net.without_exogenous();
    require_no_feedthrough(&net)?;
    let iso = isolate_system(&net, i, &cfg.tol)?;
    let gi = iso.network.system(i)?;
    let rest = iso.network.system(iso.rest)?;
    let p_i = cert.block(i)?.clone();
    let p_rest = cert.stacked(&iso.rest_members)?;
    let signed = construct_sign_structured(gi, rest, &p_i, &p_rest, &ExternalSupplies::none(), cfg)?;
    let plant = Plant::block_diag(&[&gi.plant(), &rest.plant()]);
    let p = SymMat::symmetrize(&linalg::block_diag(&[p_i.as_mat(), p_rest.as_mat()]));
    link_scaling_certificate(Subject::System(i), &plant, &signed.pair.forward, &signed.pair.backward, &p, &cfg.tol)
}

/// Stacked plant of all systems, ports concatenated per system in ascending
/// neighbour order, and the interconnection with link `edge` scaled by `alpha`.
fn network_plant(net: &NetworkGraph, edge: (SystemId, SystemId), alpha: f64) -> Result<(Plant, Mat)> {
    let plants: Vec<Plant> = net.systems().values().map(|s| s.plant()).collect();
    let refs: Vec<&Plant> = plants.iter().collect();
    let plant = Plant::block_diag(&refs);
    let mut v_off = BTreeMap::new();
    let mut w_off = BTreeMap::new();
    let (mut vo, mut wo) = (0, 0);
    for (&i, s) in net.systems() {
        for (&j, port) in s.ports() {
            v_off.insert((i, j), vo);
            w_off.insert((i, j), wo);
            vo += port.nv();
            wo += port.nw();
        }
    }
    let mut h = Mat::zeros(vo, wo);
    let scaled = |i: SystemId, j: SystemId| (i, j) == edge || (j, i) == edge;
    for (&(i, j), &r) in &v_off {
        let dim = net.system(i)?.port(j)?.nv();
        let c = w_off[&(j, i)];
        let g = if scaled(i, j) { alpha } else { 1.0 };
        for k in 0..dim {
            h[(r + k, c + k)] = g;
        }
    }
    Ok((plant, h))
}

/// Closed-loop matrix with the single link `edge` scaled by `alpha`.
pub fn scaled_closed_loop(net: &NetworkGraph, edge: (SystemId, SystemId), alpha: f64, tol: &Tolerance) -> Result<Mat> {
    let (plant, h) = network_plant(net, edge, alpha)?;
    close_loop(&plant.a, &plant.b, &plant.c, &plant.d, &h, tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub residual: Definiteness,
    /// False for `alpha` outside `[0, 1]`, where no guarantee applies.
    pub in_range: bool,
}

/// Dissipation residual of the network, with one link scaled by each
/// `alpha`, under the additive exogenous supply and additive storage.
pub fn alpha_sweep_dissipativity(
    net: &NetworkGraph,
    supplies: &BTreeMap<SystemId, QuadraticSupply>,
    cert: &StorageCertificate,
    edge: (SystemId, SystemId),
    alphas: &[f64],
    tol: &Tolerance,
) -> Result<Vec<SweepPoint>> {
    let (i, j) = edge;
    for (a, b) in [(i, j), (j, i)] {
        let s = net.system(a)?;
        let port = s.port(b)?;
        if port.d.amax() != 0.0 || port.k.amax() != 0.0 || s.l().amax() != 0.0 {
            return Err(Error::PreconditionFailed(format!("link ({a}, {b}) needs D = K = L = 0")));
        }
    }
    let ids = net.ids();
    let parts: Vec<&QuadraticSupply> = ids.iter().map(|id| supplies.get(id).ok_or(Error::UnknownSystem(*id))).collect::<Result<_>>()?;
    let supply = QuadraticSupply::direct_sum(&parts);
    let p = cert.stacked(&ids)?;
    alphas
        .iter()
        .map(|&alpha| {
            let (plant, h) = network_plant(net, edge, alpha)?;
            let a = close_loop(&plant.a, &plant.b, &plant.c, &plant.d, &h, tol)?;
            let nv = plant.nv();
            let loop_gain = if nv == 0 {
                Mat::zeros(0, plant.n())
            } else {
                (Mat::identity(nv, nv) - &h * &plant.d).lu().solve(&(&h * &plant.c)).ok_or(Error::IllPosed { condition: f64::INFINITY })?
            };
            let f = &plant.f + &plant.k * loop_gain;
            let sys = StateSpace::new(a, plant.e.clone(), f, plant.l.clone())?;
            Ok(SweepPoint { alpha, residual: dissipativity_residual(&sys, &supply, &p, tol)?, in_range: (0.0..=1.0).contains(&alpha) })
        })
        .collect()
}
