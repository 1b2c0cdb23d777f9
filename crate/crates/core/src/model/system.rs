use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::SystemId;

/// Interconnection port facing one neighbour: `w = C x + D v`, with `B`
/// feeding `v` into the state and `K` feeding `v` into the performance output.
#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub k: Mat,
}

impl Port {
    pub fn nv(&self) -> usize {
        self.b.ncols()
    }

    pub fn nw(&self) -> usize {
        self.c.nrows()
    }
}

/// LTI system with named interconnection ports and an optional exogenous
/// channel `d -> z`. Only per-port feed-through is stored, so there is no
/// direct path from one port's input to another port's output.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Mat,
    ports: BTreeMap<SystemId, Port>,
    e: Mat,
    f: Mat,
    l: Mat,
}

fn shape_check(m: &Mat, rows: usize, cols: usize, what: &str) -> Result<()> {
    linalg::check_finite(m, what)?;
    if m.shape() != (rows, cols) {
        return Err(Error::InvalidInput(format!("{what} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())));
    }
    Ok(())
}

impl LtiSystem {
    pub fn new(a: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("a system needs at least one state".into()));
        }
        shape_check(&a, n, n, "A")?;
        Ok(LtiSystem { a, ports: BTreeMap::new(), e: Mat::zeros(n, 0), f: Mat::zeros(0, n), l: Mat::zeros(0, 0) })
    }

    /// Adds the port facing `neighbor`; `d` may be omitted for a zero feed-through.
    pub fn with_port(mut self, neighbor: SystemId, b: Mat, c: Mat, d: Option<Mat>) -> Result<Self> {
        let n = self.n();
        let (nv, nw) = (b.ncols(), c.nrows());
        shape_check(&b, n, nv, "B")?;
        shape_check(&c, nw, n, "C")?;
        let d = d.unwrap_or_else(|| Mat::zeros(nw, nv));
        shape_check(&d, nw, nv, "D")?;
        if self.ports.contains_key(&neighbor) {
            return Err(Error::InvalidInput(format!("duplicate port facing {neighbor}")));
        }
        let k = Mat::zeros(self.nz(), nv);
        self.ports.insert(neighbor, Port { b, c, d, k });
        Ok(self)
    }

    /// Sets the exogenous channel; port gains `K` are reset to zero.
    pub fn with_exogenous(mut self, e: Mat, f: Mat, l: Mat) -> Result<Self> {
        let n = self.n();
        let (nd, nz) = (e.ncols(), f.nrows());
        shape_check(&e, n, nd, "E")?;
        shape_check(&f, nz, n, "F")?;
        shape_check(&l, nz, nd, "L")?;
        for p in self.ports.values_mut() {
            p.k = Mat::zeros(nz, p.nv());
        }
        self.e = e;
        self.f = f;
        self.l = l;
        Ok(self)
    }

    /// Sets the performance-output gain `K` of the port facing `neighbor`.
    pub fn with_port_gain(mut self, neighbor: SystemId, k: Mat) -> Result<Self> {
        let nz = self.nz();
        let port = self.ports.get_mut(&neighbor).ok_or(Error::UnknownSystem(neighbor))?;
        shape_check(&k, nz, port.nv(), "K")?;
        port.k = k;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn nd(&self) -> usize {
        self.e.ncols()
    }

    pub fn nz(&self) -> usize {
        self.f.nrows()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn e(&self) -> &Mat {
        &self.e
    }

    pub fn f(&self) -> &Mat {
        &self.f
    }

    pub fn l(&self) -> &Mat {
        &self.l
    }

    pub fn ports(&self) -> &BTreeMap<SystemId, Port> {
        &self.ports
    }

    pub fn port(&self, neighbor: SystemId) -> Result<&Port> {
        self.ports.get(&neighbor).ok_or(Error::UnknownSystem(neighbor))
    }

    pub fn has_exogenous(&self) -> bool {
        self.nd() > 0 || self.nz() > 0
    }

    pub fn has_feedthrough(&self) -> bool {
        self.ports.values().any(|p| p.d.amax() != 0.0)
    }

    /// Same dynamics with the exogenous channel removed.
    pub fn without_exogenous(&self) -> LtiSystem {
        let n = self.n();
        let mut out = self.clone();
        out.e = Mat::zeros(n, 0);
        out.f = Mat::zeros(0, n);
        out.l = Mat::zeros(0, 0);
        for p in out.ports.values_mut() {
            p.k = Mat::zeros(0, p.nv());
        }
        out
    }

    /// The port of a single-port system.
    pub fn sole_port(&self) -> Result<(SystemId, &Port)> {
        let mut it = self.ports.iter();
        match (it.next(), it.next()) {
            (Some((id, p)), None) => Ok((*id, p)),
            _ => Err(Error::InvalidInput(format!("expected exactly one interconnection port, found {}", self.ports.len()))),
        }
    }

    /// Flattened realisation with ports concatenated in ascending neighbour order.
    pub fn plant(&self) -> Plant {
        let n = self.n();
        let ports: Vec<&Port> = self.ports.values().collect();
        let bs: Vec<&Mat> = ports.iter().map(|p| &p.b).collect();
        let cs: Vec<&Mat> = ports.iter().map(|p| &p.c).collect();
        let ds: Vec<&Mat> = ports.iter().map(|p| &p.d).collect();
        let ks: Vec<&Mat> = ports.iter().map(|p| &p.k).collect();
        let b = linalg::hstack(n, &bs);
        let c = linalg::vstack(n, &cs);
        let d = linalg::block_diag(&ds);
        let k = linalg::hstack(self.nz(), &ks);
        Plant {
            dw: Mat::zeros(c.nrows(), self.nd()),
            a: self.a.clone(),
            b,
            e: self.e.clone(),
            c,
            d,
            f: self.f.clone(),
            k,
            l: self.l.clone(),
        }
    }
}

/// Plain state-space quadruple `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        shape_check(&a, n, n, "A")?;
        shape_check(&b, n, b.ncols(), "B")?;
        shape_check(&c, c.nrows(), n, "C")?;
        shape_check(&d, c.nrows(), b.ncols(), "D")?;
        Ok(StateSpace { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// Realisation with an interconnection channel `v -> w` and an exogenous
/// channel `d -> z`:
///
/// ```text
/// x' = A x + B v + E d
/// w  = C x + D v + Dw d
/// z  = F x + K v + L d
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a: Mat,
    pub b: Mat,
    pub e: Mat,
    pub c: Mat,
    pub d: Mat,
    pub dw: Mat,
    pub f: Mat,
    pub k: Mat,
    pub l: Mat,
}

impl Plant {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn nv(&self) -> usize {
        self.b.ncols()
    }

    pub fn nw(&self) -> usize {
        self.c.nrows()
    }

    pub fn nd(&self) -> usize {
        self.e.ncols()
    }

    pub fn nz(&self) -> usize {
        self.f.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, nv, nw, nd, nz) = (self.n(), self.nv(), self.nw(), self.nd(), self.nz());
        shape_check(&self.a, n, n, "A")?;
        shape_check(&self.b, n, nv, "B")?;
        shape_check(&self.e, n, nd, "E")?;
        shape_check(&self.c, nw, n, "C")?;
        shape_check(&self.d, nw, nv, "D")?;
        shape_check(&self.dw, nw, nd, "Dw")?;
        shape_check(&self.f, nz, n, "F")?;
        shape_check(&self.k, nz, nv, "K")?;
        shape_check(&self.l, nz, nd, "L")
    }

    /// Only the interconnection channel.
    pub fn interconnection(&self) -> StateSpace {
        StateSpace { a: self.a.clone(), b: self.b.clone(), c: self.c.clone(), d: self.d.clone() }
    }

    /// Inputs `(v, d)` and outputs `(w, z)` stacked.
    pub fn stacked(&self) -> StateSpace {
        let n = self.n();
        let b = linalg::hstack(n, &[&self.b, &self.e]);
        let c = linalg::vstack(n, &[&self.c, &self.f]);
        let top = linalg::hstack(self.nw(), &[&self.d, &self.dw]);
        let bottom = linalg::hstack(self.nz(), &[&self.k, &self.l]);
        let d = linalg::vstack(self.nv() + self.nd(), &[&top, &bottom]);
        StateSpace { a: self.a.clone(), b, c, d }
    }

    /// Block-diagonal juxtaposition of uncoupled plants; every channel is
    /// concatenated in argument order.
    pub fn block_diag(parts: &[&Plant]) -> Plant {
        macro_rules! bd {
            ($field:ident) => {
                linalg::block_diag(&parts.iter().map(|p| &p.$field).collect::<Vec<_>>())
            };
        }
        Plant { a: bd!(a), b: bd!(b), e: bd!(e), c: bd!(c), d: bd!(d), dw: bd!(dw), f: bd!(f), k: bd!(k), l: bd!(l) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn builder_checks_shapes() {
        let g = LtiSystem::new(Mat::identity(2, 2)).unwrap();
        assert!(g.clone().with_port(SystemId(1), Mat::zeros(3, 1), Mat::zeros(1, 2), None).is_err());
        let g = g.with_port(SystemId(1), Mat::zeros(2, 1), Mat::zeros(1, 2), None).unwrap();
        assert!(g.clone().with_port(SystemId(1), Mat::zeros(2, 1), Mat::zeros(1, 2), None).is_err());
        assert!(LtiSystem::new(Mat::zeros(0, 0)).is_err());
        assert!(LtiSystem::new(scalar(f64::NAN)).is_err());
    }

    #[test]
    fn plant_concatenates_ports_in_key_order() {
        let g = LtiSystem::new(Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]))
            .unwrap()
            .with_port(SystemId(3), Mat::from_row_slice(2, 1, &[0.0, 3.0]), Mat::from_row_slice(1, 2, &[3.0, 0.0]), Some(scalar(0.3)))
            .unwrap()
            .with_port(SystemId(1), Mat::from_row_slice(2, 1, &[0.0, 1.0]), Mat::from_row_slice(1, 2, &[1.0, 0.0]), Some(scalar(0.1)))
            .unwrap();
        let p = g.plant();
        assert_eq!(p.b, Mat::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 3.0]));
        assert_eq!(p.c, Mat::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 0.0]));
        assert_eq!(p.d, Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.3]));
        p.validate().unwrap();
    }

    #[test]
    fn exogenous_and_gains() {
        let g = LtiSystem::new(scalar(-1.0))
            .unwrap()
            .with_port(SystemId(2), scalar(1.0), scalar(1.0), None)
            .unwrap()
            .with_exogenous(scalar(0.5), scalar(2.0), scalar(0.0))
            .unwrap()
            .with_port_gain(SystemId(2), scalar(0.25))
            .unwrap();
        let s = g.plant().stacked();
        assert_eq!(s.b, Mat::from_row_slice(1, 2, &[1.0, 0.5]));
        assert_eq!(s.d, Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.25, 0.0]));
        assert_eq!(g.without_exogenous().nz(), 0);
    }
}
