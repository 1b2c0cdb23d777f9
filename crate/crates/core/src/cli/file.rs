//! JSON network files. Matrices are nested row-major arrays; numbers are
//! written in shortest round-trip form so re-reading is bit-exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, SymMat, Tolerance};
use crate::model::{Edge, LtiSystem, NetworkGraph, QuadraticSupply, SystemId};

pub const SCHEMA_VERSION: u32 = 1;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema_version: u32,
    pub systems: Vec<SystemEntry>,
    pub edges: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificate: Vec<StorageEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supplies: Vec<SupplyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemEntry {
    pub id: u32,
    pub a: Rows,
    pub ports: Vec<PortEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Rows>,
    /// Port gains into the performance output, ports in ascending neighbour order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortEntry {
    pub neighbor: u32,
    pub b: Rows,
    pub c: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub src: u32,
    pub dst: u32,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageEntry {
    pub system: u32,
    pub p: Rows,
}

/// Supply on the port of `system` facing `neighbor`, on `(v, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyEntry {
    pub system: u32,
    pub neighbor: u32,
    pub q: Rows,
    pub s: Rows,
    pub r: Rows,
}

fn parse_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{what}: {e}"))
}

/// Builds a matrix from rows; an empty list is read as `0 x cols`.
pub fn matrix(rows: &Rows, cols: usize, what: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Ok(Mat::zeros(0, cols));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse(format!("{what}: rows have different lengths")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{what}: non-finite entry")));
    }
    Ok(Mat::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

pub fn rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn symmetric(rows: &Rows, what: &str, tol: &Tolerance) -> Result<SymMat> {
    let m = matrix(rows, 0, what)?;
    SymMat::from_input(m, tol).map_err(|e| parse_err(what, e))
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| parse_err("network file", e))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema version {}", file.schema_version)));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network files always serialise")
    }

    pub fn network(&self) -> Result<NetworkGraph> {
        let mut systems = BTreeMap::new();
        for s in &self.systems {
            let id = SystemId(s.id);
            let what = |m: &str| format!("system {id} {m}");
            let a = matrix(&s.a, 0, &what("A"))?;
            let n = a.nrows();
            let mut sys = LtiSystem::new(a).map_err(|e| parse_err(&what("A"), e))?;
            let mut ports: Vec<&PortEntry> = s.ports.iter().collect();
            ports.sort_by_key(|p| p.neighbor);
            for p in &ports {
                let pw = |m: &str| what(&format!("port {} {m}", p.neighbor));
                let b = matrix(&p.b, 0, &pw("B"))?;
                let c = matrix(&p.c, n, &pw("C"))?;
                let d = p.d.as_ref().map(|d| matrix(d, b.ncols(), &pw("D"))).transpose()?;
                sys = sys.with_port(SystemId(p.neighbor), b, c, d).map_err(|e| parse_err(&pw("port"), e))?;
            }
            if s.e.is_some() || s.f.is_some() || s.l.is_some() || s.k.is_some() {
                let e = s.e.as_ref().map(|e| matrix(e, 0, &what("E"))).transpose()?.unwrap_or_else(|| Mat::zeros(n, 0));
                let f = s.f.as_ref().map(|f| matrix(f, n, &what("F"))).transpose()?.unwrap_or_else(|| Mat::zeros(0, n));
                let l = match &s.l {
                    Some(l) => matrix(l, e.ncols(), &what("L"))?,
                    None => Mat::zeros(f.nrows(), e.ncols()),
                };
                sys = sys.with_exogenous(e, f, l).map_err(|e| parse_err(&what("exogenous channel"), e))?;
                if let Some(k) = &s.k {
                    let total: usize = ports.iter().map(|p| p.b.first().map_or(0, |r| r.len())).sum();
                    let k = matrix(k, total, &what("K"))?;
                    if k.shape() != (sys.nz(), total) {
                        return Err(Error::Parse(format!("{} must be {}x{total}", what("K"), sys.nz())));
                    }
                    let mut col = 0;
                    for p in &ports {
                        let nv = sys.port(SystemId(p.neighbor))?.nv();
                        let block = k.columns(col, nv).into_owned();
                        sys = sys.with_port_gain(SystemId(p.neighbor), block).map_err(|e| parse_err(&what("K"), e))?;
                        col += nv;
                    }
                }
            }
            if systems.insert(id, sys).is_some() {
                return Err(Error::Parse(format!("duplicate system {id}")));
            }
        }
        let edges = self.edges.iter().map(|e| Edge { src: SystemId(e.src), dst: SystemId(e.dst), dim: e.dim }).collect();
        NetworkGraph::new(systems, edges).map_err(|e| parse_err("network", e))
    }

    /// Storage blocks, if the file carries a certificate.
    pub fn storage(&self, tol: &Tolerance) -> Result<Option<BTreeMap<SystemId, SymMat>>> {
        if self.certificate.is_empty() {
            return Ok(None);
        }
        let mut out = BTreeMap::new();
        for c in &self.certificate {
            let p = symmetric(&c.p, &format!("certificate block {}", c.system), tol)?;
            if out.insert(SystemId(c.system), p).is_some() {
                return Err(Error::Parse(format!("duplicate certificate block {}", c.system)));
            }
        }
        Ok(Some(out))
    }

    pub fn supply_map(&self, tol: &Tolerance) -> Result<BTreeMap<(SystemId, SystemId), QuadraticSupply>> {
        let mut out = BTreeMap::new();
        for s in &self.supplies {
            let what = format!("supply ({}, {})", s.system, s.neighbor);
            let q = symmetric(&s.q, &what, tol)?;
            let r = symmetric(&s.r, &what, tol)?;
            let sm = matrix(&s.s, r.dim(), &what)?;
            let supply = QuadraticSupply::new(q, sm, r).map_err(|e| parse_err(&what, e))?;
            if out.insert((SystemId(s.system), SystemId(s.neighbor)), supply).is_some() {
                return Err(Error::Parse(format!("duplicate {what}")));
            }
        }
        Ok(out)
    }

    pub fn from_network(net: &NetworkGraph) -> Self {
        let systems = net
            .systems()
            .iter()
            .map(|(id, s)| {
                let exo = s.nd() > 0 || s.nz() > 0;
                let gains: Vec<&Mat> = s.ports().values().map(|p| &p.k).collect();
                let k = crate::linalg::hstack(s.nz(), &gains);
                SystemEntry {
                    id: id.0,
                    a: rows(s.a()),
                    ports: s
                        .ports()
                        .iter()
                        .map(|(j, p)| PortEntry { neighbor: j.0, b: rows(&p.b), c: rows(&p.c), d: (p.d.amax() != 0.0).then(|| rows(&p.d)) })
                        .collect(),
                    e: exo.then(|| rows(s.e())),
                    f: exo.then(|| rows(s.f())),
                    k: (exo && k.amax() != 0.0).then(|| rows(&k)),
                    l: exo.then(|| rows(s.l())),
                }
            })
            .collect();
        let edges = net.edges().iter().map(|e| EdgeEntry { src: e.src.0, dst: e.dst.0, dim: e.dim }).collect();
        NetworkFile { schema_version: SCHEMA_VERSION, systems, edges, certificate: Vec::new(), supplies: Vec::new() }
    }

    pub fn with_storage(mut self, blocks: &BTreeMap<SystemId, SymMat>) -> Self {
        self.certificate = blocks.iter().map(|(id, p)| StorageEntry { system: id.0, p: rows(p.as_mat()) }).collect();
        self
    }

    pub fn with_supplies(mut self, supplies: &BTreeMap<(SystemId, SystemId), QuadraticSupply>) -> Self {
        self.supplies = supplies
            .iter()
            .map(|(&(i, j), s)| SupplyEntry { system: i.0, neighbor: j.0, q: rows(s.q.as_mat()), s: rows(&s.s), r: rows(s.r.as_mat()) })
            .collect();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "schema_version": 1,
        "systems": [
            {"id": 1, "a": [[-1.0]], "ports": [{"neighbor": 2, "b": [[1.0]], "c": [[1.0]]}],
             "e": [[1.0]], "f": [[2.0]], "k": [[0.5]]},
            {"id": 2, "a": [[-2.0]], "ports": [{"neighbor": 1, "b": [[1.0]], "c": [[1.0]], "d": [[0.1]]}]}
        ],
        "edges": [{"src": 1, "dst": 2, "dim": 1}, {"src": 2, "dst": 1, "dim": 1}],
        "certificate": [{"system": 1, "p": [[1.0]]}, {"system": 2, "p": [[2.0]]}]
    }"#;

    #[test]
    fn parse_and_round_trip() {
        let file = NetworkFile::from_json(SMALL).unwrap();
        let net = file.network().unwrap();
        let g1 = net.system(SystemId(1)).unwrap();
        assert_eq!(g1.port(SystemId(2)).unwrap().k[(0, 0)], 0.5);
        assert_eq!(g1.l().shape(), (1, 1));
        assert_eq!(net.system(SystemId(2)).unwrap().port(SystemId(1)).unwrap().d[(0, 0)], 0.1);
        let again = NetworkFile::from_network(&net).with_storage(&file.storage(&Tolerance::default()).unwrap().unwrap());
        let reparsed = NetworkFile::from_json(&again.to_json()).unwrap();
        assert_eq!(reparsed.network().unwrap(), net);
        assert_eq!(reparsed.certificate, file.certificate);
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        let bad = [
            SMALL.replace("[[-1.0]]", "[[NaN]]"),
            SMALL.replace("[[-1.0]]", "[[1e400]]"),
            SMALL.replace("[[-1.0]]", "[[-1.0, 2.0], [3.0]]"),
            SMALL.replace("\"schema_version\": 1", "\"schema_version\": 7"),
            SMALL.replace("\"dim\": 1}, {", "\"dim\": 3}, {"),
            SMALL.replace("\"id\": 2", "\"id\": 1"),
        ];
        for text in bad {
            let err = NetworkFile::from_json(&text).and_then(|f| f.network());
            assert!(matches!(err, Err(Error::Parse(_))), "{err:?}");
        }
    }
}
