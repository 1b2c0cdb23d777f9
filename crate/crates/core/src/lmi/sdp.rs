//! Small dense LMI feasibility engine.
//!
//! Maximises the worst normalised margin `t` subject to
//! `-F_k(y)/s_k - t I >= 0` and a box `|y_i| <= bound`, by a log-det barrier
//! path-following method with damped Newton steps.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, SymMat, Tolerance};

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
}

impl DecisionBlock {
    pub fn symmetric(name: &str, dim: usize) -> Self {
        DecisionBlock { name: name.into(), rows: dim, cols: dim, symmetric: true }
    }

    pub fn full(name: &str, rows: usize, cols: usize) -> Self {
        DecisionBlock { name: name.into(), rows, cols, symmetric: false }
    }

    fn count(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    fn unpack(&self, y: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        let mut k = 0;
        if self.symmetric {
            for i in 0..self.rows {
                for j in i..self.rows {
                    m[(i, j)] = y[k];
                    m[(j, i)] = y[k];
                    k += 1;
                }
            }
        } else {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    m[(i, j)] = y[k];
                    k += 1;
                }
            }
        }
        m
    }
}

/// `Strict`: `F(y) < 0`; `NonStrict`: `F(y) <= 0` up to the tolerance gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    Strict,
    NonStrict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Feasible,
    Infeasible,
    Undecided,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: Status,
    /// Decision values per block, in declaration order.
    pub witness: Vec<Mat>,
    /// `lambda_max(F_k)` per constraint at the witness.
    pub margins: Vec<f64>,
    /// Largest gate-relative violation; negative when every constraint passes.
    pub worst_margin: f64,
    pub iterations: usize,
    /// Optimal normalised margin reached by the engine.
    pub normalized_margin: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub bound: f64,
    pub stagnation_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 500, bound: 1.0, stagnation_window: 50 }
    }
}

type AffineMap<'a> = Box<dyn Fn(&[Mat]) -> Vec<SymMat> + 'a>;

/// Decision blocks, an affine map into constraint matrices, and a
/// strictness flag per constraint.
pub struct LmiProblem<'a> {
    blocks: Vec<DecisionBlock>,
    labels: Vec<(String, Strictness)>,
    map: AffineMap<'a>,
}

struct Coefficients {
    f0: Mat,
    fi: Vec<Mat>,
    scale: f64,
    strict: bool,
}

impl<'a> LmiProblem<'a> {
    pub fn new(blocks: Vec<DecisionBlock>, labels: Vec<(String, Strictness)>, map: impl Fn(&[Mat]) -> Vec<SymMat> + 'a) -> Self {
        LmiProblem { blocks, labels, map: Box::new(map) }
    }

    pub fn blocks(&self) -> &[DecisionBlock] {
        &self.blocks
    }

    pub fn labels(&self) -> &[(String, Strictness)] {
        &self.labels
    }

    fn n_vars(&self) -> usize {
        self.blocks.iter().map(|b| b.count()).sum()
    }

    fn unpack(&self, y: &[f64]) -> Vec<Mat> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut k = 0;
        for b in &self.blocks {
            out.push(b.unpack(&y[k..k + b.count()]));
            k += b.count();
        }
        out
    }

    pub fn evaluate(&self, values: &[Mat]) -> Result<Vec<SymMat>> {
        if values.len() != self.blocks.len() || values.iter().zip(&self.blocks).any(|(v, b)| v.shape() != (b.rows, b.cols)) {
            return Err(Error::InvalidInput("decision values do not match the declared blocks".into()));
        }
        let f = (self.map)(values);
        if f.len() != self.labels.len() {
            return Err(Error::InvalidInput("affine map returned the wrong number of constraints".into()));
        }
        Ok(f)
    }

    fn coefficients(&self) -> Result<Vec<Coefficients>> {
        let nv = self.n_vars();
        let mut y = vec![0.0; nv];
        let f0 = self.evaluate(&self.unpack(&y))?;
        let mut fi: Vec<Vec<Mat>> = vec![Vec::with_capacity(nv); f0.len()];
        for i in 0..nv {
            y[i] = 1.0;
            let fy = self.evaluate(&self.unpack(&y))?;
            y[i] = 0.0;
            for (k, m) in fy.into_iter().enumerate() {
                fi[k].push(m.into_mat() - f0[k].as_mat());
            }
        }
        // Affinity spot check at a deterministic point.
        let probe: Vec<f64> = (0..nv).map(|i| ((i + 1) as f64).sin()).collect();
        let fp = self.evaluate(&self.unpack(&probe))?;
        for (k, m) in fp.iter().enumerate() {
            let mut lin = f0[k].as_mat().clone();
            for (i, c) in fi[k].iter().enumerate() {
                lin += c * probe[i];
            }
            let err = (m.as_mat() - &lin).amax();
            if err > 1e-8 * (1.0 + m.as_mat().amax()) {
                return Err(Error::InvalidInput(format!("constraint {k} is not affine in the decision variables")));
            }
        }
        Ok(f0
            .into_iter()
            .zip(fi)
            .zip(&self.labels)
            .map(|((f0, fi), (_, st))| {
                let f0 = f0.into_mat();
                let scale = fi.iter().chain(std::iter::once(&f0)).fold(0.0, |a: f64, m| a.max(m.norm()));
                Coefficients { f0, fi, scale, strict: *st == Strictness::Strict }
            })
            .collect())
    }

    /// Substitutes a witness and gates every constraint.
    pub fn check(&self, values: &[Mat], tol: &Tolerance) -> Result<(bool, Vec<f64>, f64)> {
        let fs = self.evaluate(values)?;
        let mut ok = true;
        let mut margins = Vec::with_capacity(fs.len());
        let mut worst = f64::NEG_INFINITY;
        for (f, (_, st)) in fs.iter().zip(&self.labels) {
            let d = match st {
                Strictness::Strict => linalg::is_neg_def(f, tol)?,
                Strictness::NonStrict => linalg::is_neg_semidef(f, tol)?,
            };
            ok &= d.holds;
            margins.push(d.margin);
            let gate = match st {
                Strictness::Strict => -tol.gate(d.norm),
                Strictness::NonStrict => tol.gate(d.norm),
            };
            if f.dim() > 0 {
                worst = worst.max(d.margin - gate);
            }
        }
        Ok((ok, margins, worst))
    }

    pub fn solve(&self, tol: &Tolerance, opts: &SolverOptions) -> Result<FeasibilityResult> {
        let coeffs = self.coefficients()?;
        let nv = self.n_vars();
        // Identically zero non-strict constraints hold trivially; identically
        // zero strict ones can never hold.
        let mut active = Vec::new();
        for c in &coeffs {
            if c.scale == 0.0 || c.f0.nrows() == 0 {
                if c.strict && c.f0.nrows() > 0 {
                    return self.finish(vec![0.0; nv], Status::Infeasible, 0, f64::NEG_INFINITY, tol);
                }
                continue;
            }
            active.push(c);
        }
        let engine = Barrier { cons: active, nv, bound: opts.bound };
        let (y, t, iterations, converged) = engine.run(opts, |y| {
            let vals = self.unpack(y);
            matches!(self.check(&vals, tol), Ok((true, _, _)))
        })?;
        let vals = self.unpack(&y);
        let (ok, _, _) = self.check(&vals, tol)?;
        let status = if ok {
            Status::Feasible
        } else if converged.is_some_and(|gap| t + gap < 0.0) && y.iter().all(|v| v.abs() < 0.999 * opts.bound) {
            Status::Infeasible
        } else {
            Status::Undecided
        };
        self.finish(y, status, iterations, t, tol)
    }

    fn finish(&self, y: Vec<f64>, status: Status, iterations: usize, t: f64, tol: &Tolerance) -> Result<FeasibilityResult> {
        let witness = self.unpack(&y);
        let (_, margins, worst) = self.check(&witness, tol)?;
        Ok(FeasibilityResult { status, witness, margins, worst_margin: worst, iterations, normalized_margin: t })
    }
}

struct Barrier<'c> {
    cons: Vec<&'c Coefficients>,
    nv: usize,
    bound: f64,
}

impl Barrier<'_> {
    /// `G_k = -F_k(y)/s_k - t I`.
    fn slack(&self, c: &Coefficients, y: &[f64], t: f64) -> Mat {
        let mut f = c.f0.clone();
        for (ci, yi) in c.fi.iter().zip(y) {
            if *yi != 0.0 {
                f += ci * *yi;
            }
        }
        let n = f.nrows();
        let mut g = f * (-1.0 / c.scale);
        g = (&g + g.transpose()) * 0.5;
        for i in 0..n {
            g[(i, i)] -= t;
        }
        g
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, y: &[f64], t: f64, tau: f64) -> Option<f64> {
        let mut phi = -tau * t;
        for c in &self.cons {
            let chol = self.slack(c, y, t).cholesky()?;
            let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            phi -= logdet;
        }
        for &v in y {
            let (lo, hi) = (self.bound + v, self.bound - v);
            if lo <= 0.0 || hi <= 0.0 {
                return None;
            }
            phi -= lo.ln() + hi.ln();
        }
        phi.is_finite().then_some(phi)
    }

    fn barrier_size(&self) -> f64 {
        (self.cons.iter().map(|c| c.f0.nrows()).sum::<usize>() + 2 * self.nv) as f64
    }

    fn newton_step(&self, y: &[f64], t: f64, tau: f64) -> Option<(Vec<f64>, f64)> {
        let nz = self.nv + 1;
        let mut grad = vec![0.0; nz];
        let mut hess = Mat::zeros(nz, nz);
        grad[self.nv] = -tau;
        for c in &self.cons {
            let ginv = self.slack(c, y, t).cholesky()?.inverse();
            let mut us: Vec<Mat> = Vec::with_capacity(nz);
            for fi in &c.fi {
                us.push(&ginv * fi * (-1.0 / c.scale));
            }
            us.push(-&ginv);
            for j in 0..nz {
                grad[j] -= us[j].trace();
                for l in 0..=j {
                    let h = us[j].dot(&us[l].transpose());
                    hess[(j, l)] += h;
                    if l != j {
                        hess[(l, j)] += h;
                    }
                }
            }
        }
        for (i, &v) in y.iter().enumerate() {
            let (lo, hi) = (self.bound + v, self.bound - v);
            grad[i] += 1.0 / hi - 1.0 / lo;
            hess[(i, i)] += 1.0 / (hi * hi) + 1.0 / (lo * lo);
        }
        // Jacobi-equilibrated solve.
        let scale: Vec<f64> = (0..nz).map(|i| 1.0 / hess[(i, i)].max(1e-300).sqrt()).collect();
        let mut hs = hess.clone();
        for i in 0..nz {
            for j in 0..nz {
                hs[(i, j)] *= scale[i] * scale[j];
            }
        }
        let gs = Mat::from_fn(nz, 1, |i, _| -grad[i] * scale[i]);
        let mut reg = 0.0;
        let step = loop {
            let mut h = hs.clone();
            for i in 0..nz {
                h[(i, i)] += reg;
            }
            if let Some(ch) = h.cholesky() {
                break ch.solve(&gs);
            }
            reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
            if reg > 1.0 {
                return None;
            }
        };
        let dz: Vec<f64> = (0..nz).map(|i| step[(i, 0)] * scale[i]).collect();
        let decrement = -grad.iter().zip(&dz).map(|(g, d)| g * d).sum::<f64>();
        Some((dz, decrement))
    }

    /// Returns `(y, t, iterations, Some(gap bound) when converged)`.
    fn run(&self, opts: &SolverOptions, accept: impl Fn(&[f64]) -> bool) -> Result<(Vec<f64>, f64, usize, Option<f64>)> {
        let mut y = vec![0.0; self.nv];
        let mut t = f64::INFINITY;
        for c in &self.cons {
            let g = SymMat::symmetrize(&self.slack(c, &y, 0.0));
            t = t.min(linalg::sym_eigen(&g)?.min());
        }
        if self.cons.is_empty() {
            return Ok((y, 0.0, 0, None));
        }
        t -= 1.0;
        let m = self.barrier_size();
        let mut tau = 1.0;
        let mut iterations = 0;
        let mut history: Vec<f64> = Vec::new();
        loop {
            // Centering.
            loop {
                if iterations >= opts.max_iterations {
                    return Ok((y, t, iterations, None));
                }
                let Some((dz, dec)) = self.newton_step(&y, t, tau) else {
                    return Ok((y, t, iterations, None));
                };
                iterations += 1;
                if dec / 2.0 < 1e-9 {
                    break;
                }
                let phi0 = self.value(&y, t, tau).expect("iterate stays interior");
                let mut s = 1.0;
                let mut moved = false;
                for _ in 0..60 {
                    let yn: Vec<f64> = y.iter().zip(&dz).map(|(a, d)| a + s * d).collect();
                    let tn = t + s * dz[self.nv];
                    if let Some(phi) = self.value(&yn, tn, tau) {
                        if phi <= phi0 - 0.25 * s * dec {
                            y = yn;
                            t = tn;
                            moved = true;
                            break;
                        }
                    }
                    s *= 0.5;
                }
                history.push(t);
                if !moved {
                    break;
                }
            }
            let gap = m / tau;
            let stagnated = history.len() > opts.stagnation_window
                && (t - history[history.len() - 1 - opts.stagnation_window]).abs() <= 1e-12 * (1.0 + t.abs());
            if accept(&y) && (t >= 1e-4 || gap <= 1e-2 * t.abs()) {
                return Ok((y, t, iterations, Some(gap)));
            }
            if gap <= 1e-10 * (1.0 + t.abs()) || stagnated {
                return Ok((y, t, iterations, Some(gap)));
            }
            tau *= 8.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_feasible() {
        // x < 0 and x > -1
        let p = LmiProblem::new(
            vec![DecisionBlock::symmetric("x", 1)],
            vec![("neg".into(), Strictness::Strict), ("lower".into(), Strictness::Strict)],
            |v| {
                let x = v[0][(0, 0)];
                vec![SymMat::scalar(x), SymMat::scalar(-x - 1.0)]
            },
        );
        let r = p.solve(&Tolerance::default(), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Feasible);
        let x = r.witness[0][(0, 0)];
        assert!(x < 0.0 && x > -1.0);
    }

    #[test]
    fn scalar_infeasible() {
        // x < -1 and x > 1
        let p = LmiProblem::new(
            vec![DecisionBlock::symmetric("x", 1)],
            vec![("a".into(), Strictness::Strict), ("b".into(), Strictness::Strict)],
            |v| {
                let x = v[0][(0, 0)];
                vec![SymMat::scalar(x + 1.0), SymMat::scalar(1.0 - x)]
            },
        );
        let opts = SolverOptions { bound: 10.0, ..SolverOptions::default() };
        let r = p.solve(&Tolerance::default(), &opts).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn lyapunov_two_by_two() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let p = LmiProblem::new(
            vec![DecisionBlock::symmetric("P", 2)],
            vec![("P > 0".into(), Strictness::Strict), ("lyap".into(), Strictness::Strict)],
            |v| {
                let pm = &v[0];
                vec![SymMat::symmetrize(&-pm), SymMat::symmetrize(&(a.transpose() * pm + pm * &a))]
            },
        );
        let r = p.solve(&Tolerance::default(), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Feasible);
        assert!(r.margins.iter().all(|m| *m < 0.0));
    }

    #[test]
    fn rejects_non_affine_map() {
        let p = LmiProblem::new(vec![DecisionBlock::symmetric("x", 1)], vec![("sq".into(), Strictness::Strict)], |v| {
            vec![SymMat::scalar(v[0][(0, 0)].powi(2) - 1.0)]
        });
        assert!(p.solve(&Tolerance::default(), &SolverOptions::default()).is_err());
    }

    #[test]
    fn zero_nonstrict_constraint_is_dropped() {
        let p = LmiProblem::new(
            vec![DecisionBlock::full("s", 1, 2)],
            vec![("zero".into(), Strictness::NonStrict), ("neg".into(), Strictness::Strict)],
            |v| vec![SymMat::zeros(2), SymMat::scalar(v[0][(0, 0)] - 0.5)],
        );
        let r = p.solve(&Tolerance::default(), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Feasible);
    }
}
