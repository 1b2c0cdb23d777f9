//! Library results against values derived by hand or by independent
//! assembly in this file.

mod common;

use std::collections::BTreeMap;

use common::{random_pair, scalar, PairOptions};
use nalgebra::DVector;
use neutral_supply::cli::dcgrid::{dcgrid_network, DcGridParameters};
use neutral_supply::decompose::{build_workspace, construct_neutral_pair, DecompositionConfig, ExternalSupplies};
use neutral_supply::lmi::{find_additive_lyapunov, SolverOptions, Status};
use neutral_supply::model::{closed_loop_matrix, Edge};
use neutral_supply::{LtiSystem, Mat, NetworkGraph, QuadraticSupply, SymMat, SystemId, Tolerance};
use rand::Rng;

fn tol() -> Tolerance {
    Tolerance::default()
}

fn dcgrid_by_hand() -> Mat {
    let p = DcGridParameters::default();
    let (r, l, k) = (p.line_resistance, p.line_inductance, p.capacitance);
    let [d1, d2, d3] = p.gains;
    let (b12, b23) = (1.0 / (d1 * d2 * l), 1.0 / (d2 * d3 * l));
    let (a1, a3) = (-(r + p.first_load / (d1 * d1)) / l, -(r + 2.0 * p.second_load / (d3 * d3)) / l);
    // States: load current, (capacitor charge, line current), load current.
    Mat::from_row_slice(
        4,
        4,
        &[
            a1,
            b12 / k,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
            b12 * p.first_load,
            -2.0 / (d2 * d2 * k * l),
            -r / l,
            b23 * p.second_load,
            0.0,
            b23 / k,
            0.0,
            a3,
        ],
    )
}

#[test]
fn dcgrid_closed_loop_matches_hand_assembly() {
    let net = dcgrid_network(&DcGridParameters::default()).unwrap();
    let a = closed_loop_matrix(&net, &tol()).unwrap();
    let expected = dcgrid_by_hand();
    assert!((&a - &expected).amax() <= 1e-12 * expected.amax(), "{a}");
    assert!((a[(0, 0)] + 128_990.09).abs() < 1.0);
}

#[test]
fn found_dcgrid_storage_passes_an_independent_check() {
    let net = dcgrid_network(&DcGridParameters::default()).unwrap();
    let search = find_additive_lyapunov(&net, &tol(), &SolverOptions::default()).unwrap();
    assert_eq!(search.status, Status::Feasible);
    let cert = search.certificate.unwrap();
    let blocks: Vec<&Mat> = cert.blocks.values().map(|b| b.as_mat()).collect();
    let mut p = Mat::zeros(4, 4);
    let mut at = 0;
    for b in blocks {
        assert!(b.clone().symmetric_eigenvalues().min() > 0.0);
        p.view_mut((at, at), b.shape()).copy_from(b);
        at += b.nrows();
    }
    let a = dcgrid_by_hand();
    let lyap = a.transpose() * &p + &p * &a;
    assert!(lyap.symmetric_eigenvalues().max() < 0.0);
}

fn scalar_system(neighbor: u32, a: f64, b: f64, c: f64) -> LtiSystem {
    LtiSystem::new(scalar(a)).unwrap().with_port(SystemId(neighbor), scalar(b), scalar(c), None).unwrap()
}

#[test]
fn symmetric_scalar_pair_gives_the_small_gain_supply() {
    // Both sides: x' = -2x + v, w = x, storage x^2. The rate in (v, w) is
    // [[0, 1], [1, -4]]; halfway to its mirrored counterpart is diag(2, -2).
    let g1 = scalar_system(2, -2.0, 1.0, 1.0);
    let g2 = scalar_system(1, -2.0, 1.0, 1.0);
    let p = SymMat::scalar(1.0);
    let cfg = DecompositionConfig::default();
    let ws = build_workspace(&g1, &g2, &p, &p, &ExternalSupplies::none(), &cfg).unwrap();
    let pair = construct_neutral_pair(&ws, &cfg).unwrap();
    let expected = QuadraticSupply::new(SymMat::scalar(2.0), scalar(0.0), SymMat::scalar(-2.0)).unwrap();
    assert!(pair.forward.relative_gap(&expected) < 1e-12, "{:?}", pair.forward);
    assert_eq!(pair.backward, expected.mirror());
}

/// Storage rate `d/dt x^T P x` as a form in `(v, w)` when `C` is invertible.
fn rate_in_port_coordinates(g: &LtiSystem, p: &SymMat) -> Mat {
    let (_, port) = g.sole_port().unwrap();
    let (n, nv, nw) = (g.n(), port.nv(), port.nw());
    let c_inv = port.c.clone().try_inverse().unwrap();
    // x = C^{-1} (w - D v)
    let mut t = Mat::zeros(n, nv + nw);
    t.view_mut((0, 0), (n, nv)).copy_from(&(-&c_inv * &port.d));
    t.view_mut((0, nv), (n, nw)).copy_from(&c_inv);
    let mut pick_v = Mat::zeros(nv, nv + nw);
    pick_v.view_mut((0, 0), (nv, nv)).fill_with_identity();
    let pa = p.as_mat() * g.a();
    let pb = p.as_mat() * &port.b * &pick_v;
    let m = t.transpose() * (&pa + pa.transpose()) * &t + t.transpose() * &pb + pb.transpose() * &t;
    (&m + m.transpose()) * 0.5
}

/// Reorders a form on `(a, b)` to one on `(b, a)`.
fn swapped(m: &Mat, na: usize) -> Mat {
    let n = m.nrows();
    let nb = n - na;
    let mut perm = Mat::zeros(n, n);
    perm.view_mut((0, nb), (na, na)).fill_with_identity();
    perm.view_mut((na, 0), (nb, nb)).fill_with_identity();
    perm.transpose() * m * perm
}

#[test]
fn empty_kernel_supply_is_the_blend_of_both_storage_rates() {
    let mut rng = common::rng(21);
    let opts = PairOptions { max_states: 2, max_port: 2, feedthrough: true, exogenous: false, deficit: 0 };
    let mut checked = 0;
    while checked < 30 {
        let (inst, _) = random_pair(&mut rng, &opts, &tol());
        let square = |g: &LtiSystem| g.sole_port().unwrap().1.nw() == g.n();
        if !(square(&inst.g1) && square(&inst.g2)) {
            continue;
        }
        let alpha = rng.random_range(0.05..0.95);
        let cfg = DecompositionConfig::new(alpha, 2.0, tol()).unwrap();
        let ws = build_workspace(&inst.g1, &inst.g2, &inst.p1, &inst.p2, &ExternalSupplies::none(), &cfg).unwrap();
        let got = construct_neutral_pair(&ws, &cfg).unwrap().forward.matrix();

        let lower = rate_in_port_coordinates(&inst.g1, &inst.p1);
        let nv2 = inst.g2.sole_port().unwrap().1.nv();
        let upper = -swapped(&rate_in_port_coordinates(&inst.g2, &inst.p2), nv2);
        let expected = &lower * alpha + &upper * (1.0 - alpha);
        let gap = (got.as_mat() - &expected).amax() / expected.amax();
        assert!(gap < 1e-9, "gap {gap}");
        checked += 1;
    }
}

#[test]
fn link_scaling_leaves_a_definite_remainder() {
    // For a neutral pair, s(alpha w_2, w_1) + mirror(s)(alpha w_1, w_2)
    // equals (1 - alpha^2) (w_1^T R w_1 - w_2^T Q w_2).
    let mut rng = common::rng(22);
    let (inst, _) = random_pair(&mut rng, &PairOptions::general(), &tol());
    let cfg = DecompositionConfig::default();
    let ws = build_workspace(&inst.g1, &inst.g2, &inst.p1, &inst.p2, &inst.external, &cfg).unwrap();
    let pair = construct_neutral_pair(&ws, &cfg).unwrap();
    let (nv1, nw1) = pair.forward.dims();
    for _ in 0..20 {
        let alpha: f64 = rng.random_range(0.0..1.0);
        let w1 = DVector::from_fn(nw1, |_, _| rng.random_range(-1.0..1.0));
        let w2 = DVector::from_fn(nv1, |_, _| rng.random_range(-1.0..1.0));
        let total = pair.forward.evaluate(&(&w2 * alpha), &w1).unwrap() + pair.backward.evaluate(&(&w1 * alpha), &w2).unwrap();
        let f = &pair.forward;
        let closed = (1.0 - alpha * alpha) * (w1.dot(&(f.r.as_mat() * &w1)) - w2.dot(&(f.q.as_mat() * &w2)));
        assert!((total - closed).abs() <= 1e-10 * f.matrix().as_mat().amax().max(1.0));
    }
}

#[test]
fn positive_ring_has_additive_storage_exactly_when_stable() {
    // Three first-order systems in a directed ring: x_i' = -x_i + g x_{i-1}.
    // The ring is Metzler, so additive storage exists exactly when it is
    // stable, that is when g < 1.
    let ring = |g: f64| {
        let sys = |prev: u32, next: u32| {
            LtiSystem::new(scalar(-1.0))
                .unwrap()
                .with_port(SystemId(prev), scalar(g), scalar(0.0), None)
                .unwrap()
                .with_port(SystemId(next), scalar(0.0), scalar(1.0), None)
                .unwrap()
        };
        let systems = BTreeMap::from([(SystemId(1), sys(3, 2)), (SystemId(2), sys(1, 3)), (SystemId(3), sys(2, 1))]);
        let mut edges = Vec::new();
        for (s, d) in [(1, 2), (2, 3), (3, 1), (2, 1), (3, 2), (1, 3)] {
            edges.push(Edge { src: SystemId(s), dst: SystemId(d), dim: 1 });
        }
        NetworkGraph::new(systems, edges).unwrap()
    };
    let stable = find_additive_lyapunov(&ring(0.7), &tol(), &SolverOptions::default()).unwrap();
    assert_eq!(stable.status, Status::Feasible);
    let unstable = find_additive_lyapunov(&ring(1.3), &tol(), &SolverOptions::default()).unwrap();
    assert_ne!(unstable.status, Status::Feasible);
}
