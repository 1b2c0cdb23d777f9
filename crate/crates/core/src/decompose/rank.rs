use crate::error::{Error, Result};
use crate::linalg::{self, Mat, SymMat, Tolerance};
use crate::model::{LtiSystem, Plant, QuadraticSupply};

use super::{
    construct_neutral_pair, require_verified, single_port_plant, verify_pair, workspace_from_plants, DecompositionConfig, EdgeSupplyPair,
    ExternalSupplies,
};

/// `P C = [J; I] C_red` with `P` a row permutation putting the dependent
/// rows first and `C_red` the greedily chosen independent rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RankFactorization {
    /// Original row index of each permuted row.
    pub order: Vec<usize>,
    pub coefficients: Mat,
    pub reduced: Mat,
}

impl RankFactorization {
    pub fn new(c: &Mat, tol: &Tolerance) -> Result<Self> {
        let n = c.ncols();
        let mut independent: Vec<usize> = Vec::new();
        let mut dependent: Vec<usize> = Vec::new();
        let scale = linalg::spectral_norm(c);
        for i in 0..c.nrows() {
            let mut rows: Vec<usize> = independent.clone();
            rows.push(i);
            let candidate = Mat::from_fn(rows.len(), n, |r, k| c[(rows[r], k)]);
            let s = linalg::singular_values(&candidate);
            if s.len() == rows.len() && s.last().is_some_and(|&lo| lo > tol.rank_eps * scale.max(f64::MIN_POSITIVE)) {
                independent.push(i);
            } else {
                dependent.push(i);
            }
        }
        let pick = |rows: &[usize]| Mat::from_fn(rows.len(), n, |r, k| c[(rows[r], k)]);
        let reduced = pick(&independent);
        let dep = pick(&dependent);
        let coefficients = &dep * linalg::pseudo_inverse(&reduced, tol);
        let err = (&dep - &coefficients * &reduced).amax();
        if err > 1e-8 * (1.0 + c.amax()) {
            return Err(Error::RankAssumption(format!("row factorisation residual {err:e}")));
        }
        let order = dependent.into_iter().chain(independent).collect();
        Ok(RankFactorization { order, coefficients, reduced })
    }

    pub fn rows(&self) -> usize {
        self.order.len()
    }

    pub fn rank(&self) -> usize {
        self.reduced.nrows()
    }

    pub fn deficit(&self) -> usize {
        self.rows() - self.rank()
    }

    /// Row permutation `P` with `(P c)_k = c_{order[k]}`.
    pub fn permutation(&self) -> Mat {
        let m = self.rows();
        let mut p = Mat::zeros(m, m);
        for (k, &i) in self.order.iter().enumerate() {
            p[(k, i)] = 1.0;
        }
        p
    }

    /// `[J; I]`.
    pub fn lift(&self) -> Mat {
        linalg::vstack(self.rank(), &[&self.coefficients, &Mat::identity(self.rank(), self.rank())])
    }

    /// `[I; -J^T]`, orthogonal to the range of the lift.
    pub fn complement(&self) -> Mat {
        let k = self.deficit();
        linalg::vstack(k, &[&Mat::identity(k, k), &-self.coefficients.transpose()])
    }
}

/// Regularisation weights used on the directions that never occur on the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRecord {
    pub input: f64,
    pub output: f64,
}

struct Extension {
    lift_in: Mat,
    complement_in: Mat,
    lift_out: Mat,
    complement_out: Mat,
    perm_in: Mat,
    perm_out: Mat,
    reduced: QuadraticSupply,
    cross: Mat,
    input_correction: SymMat,
    output_correction: SymMat,
}

impl Extension {
    /// The first side's supply in original coordinates for the given weights.
    fn supply(&self, gamma_in: f64, gamma_out: f64, tol: &Tolerance) -> Result<QuadraticSupply> {
        let t_in = linalg::hstack(self.lift_in.nrows(), &[&self.lift_in, &self.complement_in]);
        let t_out = linalg::hstack(self.lift_out.nrows(), &[&self.lift_out, &self.complement_out]);
        let k_in = self.complement_in.ncols();
        let k_out = self.complement_out.ncols();
        let q_orth = Mat::identity(k_in, k_in) * gamma_in - self.input_correction.as_mat();
        let r_orth = Mat::identity(k_out, k_out) * -gamma_out + self.output_correction.as_mat();
        let t_in_inv = linalg::inverse(&t_in, tol)?;
        let t_out_inv = linalg::inverse(&t_out, tol)?;
        let q = t_in_inv.transpose() * linalg::block_diag(&[self.reduced.q.as_mat(), &q_orth]) * &t_in_inv;
        let r = t_out_inv.transpose() * linalg::block_diag(&[self.reduced.r.as_mat(), &r_orth]) * &t_out_inv;
        Ok(QuadraticSupply {
            q: SymMat::symmetrize(&(self.perm_in.transpose() * q * &self.perm_in)),
            s: self.perm_in.transpose() * &self.cross * &self.perm_out,
            r: SymMat::symmetrize(&(self.perm_out.transpose() * r * &self.perm_out)),
        })
    }
}

/// Initial weight from the Schur bound of the transformed local inequality:
/// `1 + |cross|^2 / |lambda_max(kept block)|`, where the last `k` inputs are the
/// regularised directions.
fn initial_gamma(
    plant: &Plant,
    storage: &SymMat,
    supply: &QuadraticSupply,
    external: &QuadraticSupply,
    input_transform: &Mat,
    k: usize,
) -> Result<f64> {
    let m = crate::lmi::dissipativity_matrix(&plant.stacked(), &QuadraticSupply::direct_sum(&[supply, external]), storage)?;
    let (n, nv, nd) = (plant.n(), plant.nv(), plant.nd());
    let t = linalg::block_diag(&[&Mat::identity(n, n), input_transform, &Mat::identity(nd, nd)]);
    let m = m.congruence(&t).into_mat();
    let total = n + nv + nd;
    let free: Vec<usize> = (n + nv - k..n + nv).collect();
    let kept: Vec<usize> = (0..total).filter(|i| !free.contains(i)).collect();
    let kept_block = SymMat::symmetrize(&Mat::from_fn(kept.len(), kept.len(), |i, j| m[(kept[i], kept[j])]));
    let cross = Mat::from_fn(kept.len(), k, |i, j| m[(kept[i], free[j])]);
    let top = linalg::sym_eigen(&kept_block)?.max();
    if top.is_nan() || top >= 0.0 {
        return Err(Error::hypothesis("reduced local dissipation", top));
    }
    Ok(1.0 + linalg::spectral_norm(&cross).powi(2) / top.abs())
}

/// Neutral pair when an output matrix lacks full row rank and both sides
/// have zero feedthrough: the pair is built for the independent outputs and
/// extended to the dependent directions with weights found by a growth search.
pub fn extend_rank_deficient(
    g1: &LtiSystem,
    g2: &LtiSystem,
    p1: &SymMat,
    p2: &SymMat,
    external: &ExternalSupplies,
    cfg: &DecompositionConfig,
) -> Result<EdgeSupplyPair> {
    let tol = &cfg.tol;
    let (pl1, pl2) = (single_port_plant(g1)?, single_port_plant(g2)?);
    if pl1.d.amax() != 0.0 || pl2.d.amax() != 0.0 {
        return Err(Error::PreconditionFailed("rank-deficient outputs are only supported with zero feedthrough".into()));
    }
    let f1 = RankFactorization::new(&pl1.c, tol)?;
    let f2 = RankFactorization::new(&pl2.c, tol)?;
    if f1.deficit() == 0 && f2.deficit() == 0 {
        let ws = workspace_from_plants((pl1, pl2), (p1, p2), external, None, tol)?;
        return construct_neutral_pair(&ws, cfg);
    }
    let (perm1, perm2) = (f1.permutation(), f2.permutation());
    // Each side's input equals the other side's output, so it ranges over
    // that side's lifted reduced output.
    let in1 = perm2.transpose() * f2.lift();
    let in2 = perm1.transpose() * f1.lift();
    let reduce = |pl: &Plant, f: &RankFactorization, input: &Mat| Plant {
        a: pl.a.clone(),
        b: &pl.b * input,
        e: pl.e.clone(),
        c: f.reduced.clone(),
        d: Mat::zeros(f.rank(), input.ncols()),
        dw: Mat::zeros(f.rank(), pl.nd()),
        f: pl.f.clone(),
        k: &pl.k * input,
        l: pl.l.clone(),
    };
    let red1 = reduce(&pl1, &f1, &in1);
    let red2 = reduce(&pl2, &f2, &in2);
    let ws = workspace_from_plants((red1, red2), (p1, p2), external, None, tol)?;
    let reduced = construct_neutral_pair(&ws, cfg)?.forward;

    // Least-norm S with [J_2^T I] S [J_1; I] = S_red.
    let left = linalg::pseudo_inverse(&f2.lift().transpose(), tol);
    let right = linalg::pseudo_inverse(&f1.lift(), tol);
    let cross = &left * &reduced.s * &right;
    let correction = |pl: &Plant, perm: &Mat, comp: &Mat, ext: &QuadraticSupply| {
        let kn = &pl.k * perm.transpose() * comp;
        SymMat::symmetrize(&(kn.transpose() * ext.r.as_mat() * &kn))
    };
    let ext = Extension {
        input_correction: correction(&pl1, &perm2, &f2.complement(), &external.first),
        output_correction: correction(&pl2, &perm1, &f1.complement(), &external.second),
        lift_in: f2.lift(),
        complement_in: f2.complement(),
        lift_out: f1.lift(),
        complement_out: f1.complement(),
        perm_in: perm2.clone(),
        perm_out: perm1.clone(),
        reduced,
        cross,
    };

    let local = |side: usize, s: &QuadraticSupply| -> Result<bool> {
        let (pl, p, e, s) = if side == 0 { (&pl1, p1, &external.first, s.clone()) } else { (&pl2, p2, &external.second, s.mirror()) };
        let r = crate::lmi::dissipativity_residual(&pl.stacked(), &QuadraticSupply::direct_sum(&[&s, e]), p, tol)?;
        Ok(r.holds)
    };
    let search = |side: usize, k: usize, transform: Mat| -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let probe = |g: f64| if side == 0 { ext.supply(g, 0.0, tol) } else { ext.supply(0.0, g, tol) };
        let (pl, p, e) = if side == 0 { (&pl1, p1, &external.first) } else { (&pl2, p2, &external.second) };
        let at_zero = if side == 0 { probe(0.0)? } else { probe(0.0)?.mirror() };
        let mut gamma = initial_gamma(pl, p, &at_zero, e, &transform, k)?;
        for _ in 0..=cfg.gamma_doublings {
            if local(side, &probe(gamma)?)? {
                return Ok(gamma);
            }
            gamma *= cfg.gamma_growth;
        }
        Err(Error::GammaSearchExhausted { doublings: cfg.gamma_doublings })
    };
    let t1 = perm2.transpose() * linalg::hstack(pl1.nv(), &[&f2.lift(), &f2.complement()]);
    let t2 = perm1.transpose() * linalg::hstack(pl2.nv(), &[&f1.lift(), &f1.complement()]);
    let gamma_in = search(0, f2.deficit(), t1)?;
    let gamma_out = search(1, f1.deficit(), t2)?;

    let forward = ext.supply(gamma_in, gamma_out, tol)?;
    let backward = forward.mirror();
    let verification = verify_pair((&pl1, p1, &external.first), (&pl2, p2, &external.second), &forward, &backward, tol)?;
    require_verified(&verification)?;
    Ok(EdgeSupplyPair { forward, backward, verification, gamma: Some(GammaRecord { input: gamma_in, output: gamma_out }) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization_of_duplicated_row() {
        let c = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 1.0]);
        let f = RankFactorization::new(&c, &Tolerance::default()).unwrap();
        assert_eq!(f.order, vec![1, 0, 2]);
        assert_eq!(f.rank(), 2);
        let rebuilt = f.permutation().transpose() * f.lift() * &f.reduced;
        assert!((rebuilt - &c).amax() < 1e-12);
        assert!((f.lift().transpose() * f.complement()).amax() < 1e-12);
    }

    #[test]
    fn full_rank_has_no_deficit() {
        let f = RankFactorization::new(&Mat::identity(2, 3), &Tolerance::default()).unwrap();
        assert_eq!(f.deficit(), 0);
        assert_eq!(f.order, vec![0, 1]);
    }
}
