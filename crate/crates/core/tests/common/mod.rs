//! Seeded generators of instances that satisfy the decomposition hypotheses
//! by construction: storage first, then dynamics that it certifies.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use neutral_supply::decompose::ExternalSupplies;
use neutral_supply::linalg::{self, Definiteness};
use neutral_supply::lmi::dissipativity_residual;
use neutral_supply::model::{Edge, StateSpace};
use neutral_supply::{LtiSystem, Mat, NetworkGraph, QuadraticSupply, SymMat, SystemId, Tolerance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Base seed, overridable through `NEUTRAL_SUPPLY_SEED`.
pub fn seed() -> u64 {
    std::env::var("NEUTRAL_SUPPLY_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_SEED)
}

pub fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed());
    r.set_stream(stream);
    r
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    // Sum of uniforms is close enough to normal for test data.
    DMatrix::from_fn(rows, cols, |_, _| scale * ((0..4).map(|_| rng.random::<f64>()).sum::<f64>() - 2.0) * 0.866)
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMat {
    let x = gaussian(rng, n, n, 1.0);
    SymMat::symmetrize(&(&x * x.transpose() + Mat::identity(n, n) * 0.5))
}

/// `A` with `A^T P + P A = -2 W` for a random `W > 0`.
pub fn certified_dynamics(rng: &mut ChaCha8Rng, p: &SymMat, decay: f64) -> Mat {
    let n = p.dim();
    let y = gaussian(rng, n, n, 0.7);
    let z = gaussian(rng, n, n, 1.0);
    let w = &y * y.transpose() + Mat::identity(n, n) * decay;
    let p_inv = p.as_mat().clone().try_inverse().expect("positive definite");
    p_inv * (-w + (&z - z.transpose()))
}

/// Output matrix with `rows` rows of rank `rows - deficit`; dependent rows
/// are random combinations of independent ones, placed at random positions.
pub fn output_matrix(rng: &mut ChaCha8Rng, rows: usize, n: usize, deficit: usize, scale: f64) -> Mat {
    let rank = rows - deficit;
    let base = gaussian(rng, rank, n, scale);
    let combos = gaussian(rng, deficit, rank, 1.0);
    let dep = &combos * &base;
    let mut all: Vec<Vec<f64>> = (0..rank).map(|i| base.row(i).iter().copied().collect()).collect();
    for i in 0..deficit {
        let pos = rng.random_range(0..=all.len());
        all.insert(pos, dep.row(i).iter().copied().collect());
    }
    DMatrix::from_fn(rows, n, |i, j| all[i][j])
}

#[derive(Debug, Clone, Copy)]
pub struct PairOptions {
    pub max_states: usize,
    pub max_port: usize,
    pub feedthrough: bool,
    pub exogenous: bool,
    /// Rank deficit of the first output matrix; the second gets `0..=deficit`.
    pub deficit: usize,
}

impl PairOptions {
    /// Feedthrough, exogenous channels and port gains all present.
    pub fn general() -> Self {
        PairOptions { max_states: 4, max_port: 2, feedthrough: true, exogenous: true, deficit: 0 }
    }

    pub fn autonomous() -> Self {
        PairOptions { max_states: 4, max_port: 2, feedthrough: false, exogenous: false, deficit: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PairInstance {
    pub g1: LtiSystem,
    pub g2: LtiSystem,
    pub p1: SymMat,
    pub p2: SymMat,
    pub external: ExternalSupplies,
}

impl PairInstance {
    pub fn storage(&self) -> SymMat {
        SymMat::symmetrize(&linalg::block_diag(&[self.p1.as_mat(), self.p2.as_mat()]))
    }

    /// The joined pair as one system from `(d_1, d_2)` to `(z_1, z_2)`.
    pub fn closed_loop(&self) -> StateSpace {
        let (p1, p2) = (self.g1.plant(), self.g2.plant());
        let (n1, n2) = (p1.n(), p2.n());
        let (nv1, nv2) = (p1.nv(), p2.nv());
        let n = n1 + n2;
        let b = linalg::block_diag(&[&p1.b, &p2.b]);
        let c = linalg::block_diag(&[&p1.c, &p2.c]);
        let d = linalg::block_diag(&[&p1.d, &p2.d]);
        let k = linalg::block_diag(&[&p1.k, &p2.k]);
        let mut h = Mat::zeros(nv1 + nv2, nv2 + nv1);
        h.view_mut((0, nv2), (nv1, nv1)).fill_with_identity();
        h.view_mut((nv1, 0), (nv2, nv2)).fill_with_identity();
        let m = Mat::identity(nv1 + nv2, nv1 + nv2) - &h * &d;
        let gain = m.try_inverse().expect("well-posed") * &h * &c;
        let a = linalg::block_diag(&[&p1.a, &p2.a]) + &b * &gain;
        let f = linalg::block_diag(&[&p1.f, &p2.f]) + &k * &gain;
        let e = linalg::block_diag(&[&p1.e, &p2.e]);
        let l = linalg::block_diag(&[&p1.l, &p2.l]);
        debug_assert_eq!(a.nrows(), n);
        StateSpace::new(a, e, f, l).expect("consistent shapes")
    }

    /// Strict dissipativity of the joined pair under the additive exogenous
    /// supply and additive storage.
    pub fn network_margin(&self, tol: &Tolerance) -> Definiteness {
        let supply = QuadraticSupply::direct_sum(&[&self.external.first, &self.external.second]);
        dissipativity_residual(&self.closed_loop(), &supply, &self.storage(), tol).expect("shapes agree")
    }
}

fn gain_supply(inputs: usize, outputs: usize, gamma: f64) -> QuadraticSupply {
    QuadraticSupply::new(SymMat::identity(inputs).scaled(gamma * gamma), Mat::zeros(inputs, outputs), SymMat::identity(outputs).neg())
        .expect("consistent shapes")
}

fn one_system(rng: &mut ChaCha8Rng, neighbor: SystemId, p: &SymMat, nv: usize, c: Mat, opts: &PairOptions) -> (LtiSystem, QuadraticSupply) {
    let n = p.dim();
    let decay = 1.0 + 2.0 * rng.random::<f64>();
    let a = certified_dynamics(rng, p, decay);
    let b = gaussian(rng, n, nv, 0.6);
    let d = opts.feedthrough.then(|| gaussian(rng, c.nrows(), nv, 0.25));
    let mut g = LtiSystem::new(a).unwrap().with_port(neighbor, b, c, d).unwrap();
    let mut ext = QuadraticSupply::zeros(0, 0);
    if opts.exogenous {
        let nd = rng.random_range(1..=2);
        let nz = rng.random_range(1..=2);
        let e = gaussian(rng, n, nd, 0.5);
        let f = gaussian(rng, nz, n, 0.5);
        let l = if opts.feedthrough { gaussian(rng, nz, nd, 0.3) } else { Mat::zeros(nz, nd) };
        g = g.with_exogenous(e, f, l).unwrap();
        if opts.feedthrough {
            g = g.with_port_gain(neighbor, gaussian(rng, nz, nv, 0.3)).unwrap();
        }
        ext = gain_supply(nd, nz, 4.0);
    }
    (g, ext)
}

/// Draws until the joined pair is strictly dissipative under the additive
/// supply and storage; returns the instance and the number of draws.
pub fn random_pair(rng: &mut ChaCha8Rng, opts: &PairOptions, tol: &Tolerance) -> (PairInstance, usize) {
    for attempt in 1.. {
        let n1 = rng.random_range(1..=opts.max_states);
        let n2 = rng.random_range(1..=opts.max_states);
        let deficit2 = if opts.deficit == 0 { 0 } else { rng.random_range(0..=opts.deficit) };
        let nw1 = rng.random_range(1..=opts.max_port.min(n1)) + opts.deficit;
        let nw2 = rng.random_range(1..=opts.max_port.min(n2)) + deficit2;
        let p1 = random_pd(rng, n1);
        let p2 = random_pd(rng, n2);
        let c1 = output_matrix(rng, nw1, n1, opts.deficit, 0.6);
        let c2 = output_matrix(rng, nw2, n2, deficit2, 0.6);
        let (g1, e1) = one_system(rng, SystemId(2), &p1, nw2, c1, opts);
        let (g2, e2) = one_system(rng, SystemId(1), &p2, nw1, c2, opts);
        let inst = PairInstance { g1, g2, p1, p2, external: ExternalSupplies { first: e1, second: e2 } };
        if inst.network_margin(tol).holds {
            return (inst, attempt);
        }
    }
    unreachable!()
}

pub fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

/// The pair as a two-system network.
pub fn pair_network(inst: &PairInstance) -> NetworkGraph {
    let (nw1, nw2) = (inst.g1.sole_port().unwrap().1.nw(), inst.g2.sole_port().unwrap().1.nw());
    NetworkGraph::new(
        BTreeMap::from([(SystemId(1), inst.g1.clone()), (SystemId(2), inst.g2.clone())]),
        vec![Edge { src: SystemId(1), dst: SystemId(2), dim: nw1 }, Edge { src: SystemId(2), dst: SystemId(1), dim: nw2 }],
    )
    .unwrap()
}

/// Largest eigenvalue of a dissipation inequality built directly from its
/// quadratic-form definition, independent of the library's assembly.
pub fn dissipation_oracle(sys: &StateSpace, supply: &QuadraticSupply, p: &SymMat) -> f64 {
    let (n, m) = (sys.n(), sys.inputs());
    // d/dt x^T P x = [x;u]^T [[A^T P + P A, P B], [B^T P, 0]] [x;u]
    let mut lhs = Mat::zeros(n + m, n + m);
    let pa = p.as_mat() * &sys.a;
    let pb = p.as_mat() * &sys.b;
    lhs.view_mut((0, 0), (n, n)).copy_from(&(&pa + pa.transpose()));
    lhs.view_mut((0, n), (n, m)).copy_from(&pb);
    lhs.view_mut((n, 0), (m, n)).copy_from(&pb.transpose());
    // supply(u, y) with y = C x + D u, as a form in [x; u]
    let mut io = Mat::zeros(m + sys.outputs(), n + m);
    io.view_mut((0, n), (m, m)).fill_with_identity();
    io.view_mut((m, 0), (sys.outputs(), n)).copy_from(&sys.c);
    io.view_mut((m, n), (sys.outputs(), m)).copy_from(&sys.d);
    let rhs = io.transpose() * supply.matrix().as_mat() * &io;
    let diff = lhs - rhs;
    let sym = (&diff + diff.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}
