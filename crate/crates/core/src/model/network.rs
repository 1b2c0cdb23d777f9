use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, SymMat, Tolerance};
use crate::model::{LtiSystem, Port, StorageCertificate, SystemId};

/// Directed edge: `src` sends a signal of dimension `dim` to `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: SystemId,
    pub dst: SystemId,
    pub dim: usize,
}

/// Systems bound to a directed interconnection graph. The port of system
/// `i` facing `j` outputs the signal of edge `(i, j)` and receives the
/// signal of edge `(j, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    systems: BTreeMap<SystemId, LtiSystem>,
    edges: Vec<Edge>,
}

impl NetworkGraph {
    pub fn new(systems: BTreeMap<SystemId, LtiSystem>, mut edges: Vec<Edge>) -> Result<Self> {
        edges.sort();
        let mut dims: BTreeMap<(SystemId, SystemId), usize> = BTreeMap::new();
        for e in &edges {
            for id in [e.src, e.dst] {
                if !systems.contains_key(&id) {
                    return Err(Error::UnknownSystem(id));
                }
            }
            if e.src == e.dst || e.dim == 0 {
                return Err(Error::InvalidInput(format!("edge ({}, {}) must join distinct systems with dim >= 1", e.src, e.dst)));
            }
            if dims.insert((e.src, e.dst), e.dim).is_some() {
                return Err(Error::InvalidInput(format!("duplicate edge ({}, {})", e.src, e.dst)));
            }
        }
        for (&i, sys) in &systems {
            let expected: BTreeSet<SystemId> = dims
                .keys()
                .filter_map(|&(s, t)| {
                    if s == i {
                        Some(t)
                    } else if t == i {
                        Some(s)
                    } else {
                        None
                    }
                })
                .collect();
            let actual: BTreeSet<SystemId> = sys.ports().keys().copied().collect();
            if expected != actual {
                return Err(Error::InvalidInput(format!("system {i} has ports {actual:?} but its neighbours are {expected:?}")));
            }
            for (&j, port) in sys.ports() {
                let nw = dims.get(&(i, j)).copied().unwrap_or(0);
                let nv = dims.get(&(j, i)).copied().unwrap_or(0);
                if port.nw() != nw || port.nv() != nv {
                    return Err(Error::InvalidInput(format!(
                        "port of {i} facing {j} is {}x{} (w x v), edges require {nw}x{nv}",
                        port.nw(),
                        port.nv()
                    )));
                }
            }
        }
        Ok(NetworkGraph { systems, edges })
    }

    pub fn systems(&self) -> &BTreeMap<SystemId, LtiSystem> {
        &self.systems
    }

    pub fn system(&self, id: SystemId) -> Result<&LtiSystem> {
        self.systems.get(&id).ok_or(Error::UnknownSystem(id))
    }

    pub fn ids(&self) -> Vec<SystemId> {
        self.systems.keys().copied().collect()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_dim(&self, src: SystemId, dst: SystemId) -> usize {
        self.edges.iter().find(|e| e.src == src && e.dst == dst).map_or(0, |e| e.dim)
    }

    /// Undirected edges `(min, max)`, sorted; a bidirected pair counts once.
    pub fn undirected_edges(&self) -> Vec<(SystemId, SystemId)> {
        let set: BTreeSet<(SystemId, SystemId)> = self.edges.iter().map(|e| (e.src.min(e.dst), e.src.max(e.dst))).collect();
        set.into_iter().collect()
    }

    pub fn neighbors(&self, id: SystemId) -> Result<Vec<SystemId>> {
        Ok(self.system(id)?.ports().keys().copied().collect())
    }

    pub fn total_states(&self) -> usize {
        self.systems.values().map(|s| s.n()).sum()
    }

    pub fn has_feedthrough(&self) -> bool {
        self.systems.values().any(|s| s.has_feedthrough())
    }

    /// Same network with every exogenous channel removed.
    pub fn without_exogenous(&self) -> NetworkGraph {
        NetworkGraph { systems: self.systems.iter().map(|(&id, s)| (id, s.without_exogenous())).collect(), edges: self.edges.clone() }
    }

    /// Verifies a block-diagonal storage against the closed loop.
    pub fn certify(&self, blocks: BTreeMap<SystemId, SymMat>, tol: &Tolerance) -> Result<StorageCertificate> {
        let ids = self.ids();
        for id in &ids {
            let b = blocks.get(id).ok_or_else(|| Error::InvalidInput(format!("no storage block for system {id}")))?;
            if b.dim() != self.system(*id)?.n() {
                return Err(Error::InvalidInput(format!("storage block of {id} has wrong dimension")));
            }
        }
        if blocks.len() != ids.len() {
            return Err(Error::InvalidInput("storage blocks for systems outside the network".into()));
        }
        let a = closed_loop_matrix(self, tol)?;
        let p = SymMat::symmetrize(&linalg::block_diag(&blocks.values().map(|b| b.as_mat()).collect::<Vec<_>>()));
        let lyap = SymMat::symmetrize(&(a.transpose() * p.as_mat() + p.as_mat() * &a));
        let neg = linalg::is_neg_def(&lyap, tol)?;
        let mut min_eig = f64::INFINITY;
        let mut pd = true;
        for b in blocks.values() {
            let d = linalg::is_pos_def(b, tol)?;
            min_eig = min_eig.min(d.margin);
            pd &= d.holds;
        }
        Ok(StorageCertificate { blocks, margin: neg.margin, min_eigenvalue: min_eig, positive_definite: pd, lyapunov_holds: neg.holds })
    }
}

/// Result of the loop-invertibility test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPosedness {
    pub holds: bool,
    pub condition: f64,
}

/// Feed-through loop of a member set: internal channels `(m, j)` in
/// lexicographic order, `D` block diagonal and `H` routing `w_{j,m}` into `v_{m,j}`.
struct InternalLoop {
    channels: Vec<(SystemId, SystemId)>,
    v_off: BTreeMap<(SystemId, SystemId), usize>,
    w_off: BTreeMap<(SystemId, SystemId), usize>,
    nv: usize,
    nw: usize,
    d: Mat,
    h: Mat,
}

fn internal_loop(net: &NetworkGraph, members: &BTreeSet<SystemId>) -> InternalLoop {
    let mut channels = Vec::new();
    let (mut v_off, mut w_off) = (BTreeMap::new(), BTreeMap::new());
    let (mut nv, mut nw) = (0, 0);
    let mut ds = Vec::new();
    for &m in members {
        for (&j, port) in net.systems[&m].ports() {
            if members.contains(&j) {
                channels.push((m, j));
                v_off.insert((m, j), nv);
                w_off.insert((m, j), nw);
                nv += port.nv();
                nw += port.nw();
                ds.push(&port.d);
            }
        }
    }
    let d = linalg::block_diag(&ds);
    let mut h = Mat::zeros(nv, nw);
    for &(m, j) in &channels {
        let dim = net.systems[&m].ports()[&j].nv();
        let (r, c) = (v_off[&(m, j)], w_off[&(j, m)]);
        for k in 0..dim {
            h[(r + k, c + k)] = 1.0;
        }
    }
    InternalLoop { channels, v_off, w_off, nv, nw, d, h }
}

impl InternalLoop {
    fn loop_matrix(&self) -> Mat {
        Mat::identity(self.nv, self.nv) - &self.h * &self.d
    }

    fn well_posed(&self, tol: &Tolerance) -> WellPosedness {
        let condition = linalg::condition_number(&self.loop_matrix());
        WellPosedness { holds: condition.is_finite() && condition < 1.0 / tol.rank_eps, condition }
    }
}

pub fn well_posedness(net: &NetworkGraph, tol: &Tolerance) -> WellPosedness {
    let members: BTreeSet<SystemId> = net.systems.keys().copied().collect();
    internal_loop(net, &members).well_posed(tol)
}

/// The autonomous closed-loop matrix of the whole network, states ordered
/// by ascending system id.
pub fn closed_loop_matrix(net: &NetworkGraph, tol: &Tolerance) -> Result<Mat> {
    let id = *net.systems.keys().next().ok_or_else(|| Error::InvalidInput("empty network".into()))?;
    let grouping = net.systems.keys().map(|&k| (k, id)).collect();
    let lumped = compose(net, &grouping, tol)?;
    Ok(lumped.systems[&id].a().clone())
}

/// Member order of a pair of groups' shared channels: pairs are listed with
/// the member of the lower group id first, then sorted.
fn shared_channels(
    net: &NetworkGraph,
    g: SystemId,
    g_members: &BTreeSet<SystemId>,
    h: SystemId,
    h_members: &BTreeSet<SystemId>,
) -> Vec<(SystemId, SystemId)> {
    let mut pairs: Vec<(SystemId, SystemId)> = Vec::new();
    for &m in g_members {
        for &o in net.systems[&m].ports().keys() {
            if h_members.contains(&o) {
                pairs.push(if g < h { (m, o) } else { (o, m) });
            }
        }
    }
    pairs.sort();
    pairs.into_iter().map(|(x, y)| if g < h { (x, y) } else { (y, x) }).collect()
}

/// Replaces each group of systems by one lumped system: member states are
/// concatenated in ascending id order, internal edges are closed through the
/// unique loop solution, and channels to another group are merged into one
/// port. `grouping` must map every system to its group id.
pub(crate) fn compose(net: &NetworkGraph, grouping: &BTreeMap<SystemId, SystemId>, tol: &Tolerance) -> Result<NetworkGraph> {
    let mut groups: BTreeMap<SystemId, BTreeSet<SystemId>> = BTreeMap::new();
    for (&m, &g) in grouping {
        groups.entry(g).or_default().insert(m);
    }
    let mut systems = BTreeMap::new();
    for (&g, members) in &groups {
        systems.insert(g, lump_group(net, g, members, grouping, &groups, tol)?);
    }
    let mut edges = Vec::new();
    for (&g, gm) in &groups {
        for (&h, hm) in &groups {
            if g == h {
                continue;
            }
            let dim: usize = shared_channels(net, g, gm, h, hm).iter().map(|&(m, o)| net.edge_dim(m, o)).sum();
            if dim > 0 {
                edges.push(Edge { src: g, dst: h, dim });
            }
        }
    }
    NetworkGraph::new(systems, edges)
}

fn lump_group(
    net: &NetworkGraph,
    g: SystemId,
    members: &BTreeSet<SystemId>,
    grouping: &BTreeMap<SystemId, SystemId>,
    groups: &BTreeMap<SystemId, BTreeSet<SystemId>>,
    tol: &Tolerance,
) -> Result<LtiSystem> {
    let mut x_off = BTreeMap::new();
    let (mut n, mut nz) = (0, 0);
    let mut z_off = BTreeMap::new();
    for &m in members {
        let s = &net.systems[&m];
        x_off.insert(m, n);
        z_off.insert(m, nz);
        n += s.n();
        nz += s.nz();
    }
    let sys_of = |m: SystemId| &net.systems[&m];
    let a_diag = linalg::block_diag(&members.iter().map(|&m| sys_of(m).a()).collect::<Vec<_>>());
    let e = linalg::block_diag(&members.iter().map(|&m| sys_of(m).e()).collect::<Vec<_>>());
    let f_diag = linalg::block_diag(&members.iter().map(|&m| sys_of(m).f()).collect::<Vec<_>>());
    let l = linalg::block_diag(&members.iter().map(|&m| sys_of(m).l()).collect::<Vec<_>>());

    let lp = internal_loop(net, members);
    let mut b_int = Mat::zeros(n, lp.nv);
    let mut c_int = Mat::zeros(lp.nw, n);
    let mut k_int = Mat::zeros(nz, lp.nv);
    for &(m, j) in &lp.channels {
        let s = sys_of(m);
        let port = &s.ports()[&j];
        let (xo, zo, vo, wo) = (x_off[&m], z_off[&m], lp.v_off[&(m, j)], lp.w_off[&(m, j)]);
        b_int.view_mut((xo, vo), (s.n(), port.nv())).copy_from(&port.b);
        c_int.view_mut((wo, xo), (port.nw(), s.n())).copy_from(&port.c);
        k_int.view_mut((zo, vo), (s.nz(), port.nv())).copy_from(&port.k);
    }
    let wp = lp.well_posed(tol);
    if !wp.holds {
        return Err(Error::IllPosed { condition: wp.condition });
    }
    // v_int = (I - H D)^{-1} H C x
    let gain = if lp.nv == 0 {
        Mat::zeros(0, n)
    } else {
        lp.loop_matrix().lu().solve(&(&lp.h * &c_int)).ok_or(Error::IllPosed { condition: wp.condition })?
    };
    let a = a_diag + &b_int * &gain;
    let f = f_diag + &k_int * &gain;
    let mut lumped = LtiSystem::new(a)?.with_exogenous(e, f, l)?;

    let mut gains = Vec::new();
    for (&h, hm) in groups {
        if h == g {
            continue;
        }
        let channels = shared_channels(net, g, members, h, hm);
        if channels.is_empty() {
            continue;
        }
        let mut port_parts: Vec<(SystemId, &Port)> = Vec::new();
        for &(m, o) in &channels {
            debug_assert_eq!(grouping[&o], h);
            port_parts.push((m, &sys_of(m).ports()[&o]));
        }
        let nv: usize = port_parts.iter().map(|(_, p)| p.nv()).sum();
        let nw: usize = port_parts.iter().map(|(_, p)| p.nw()).sum();
        let mut b = Mat::zeros(n, nv);
        let mut c = Mat::zeros(nw, n);
        let mut k = Mat::zeros(nz, nv);
        let (mut vo, mut wo) = (0, 0);
        for &(m, p) in &port_parts {
            let s = sys_of(m);
            b.view_mut((x_off[&m], vo), (s.n(), p.nv())).copy_from(&p.b);
            c.view_mut((wo, x_off[&m]), (p.nw(), s.n())).copy_from(&p.c);
            k.view_mut((z_off[&m], vo), (s.nz(), p.nv())).copy_from(&p.k);
            vo += p.nv();
            wo += p.nw();
        }
        let d = linalg::block_diag(&port_parts.iter().map(|(_, p)| &p.d).collect::<Vec<_>>());
        lumped = lumped.with_port(h, b, c, Some(d))?;
        gains.push((h, k));
    }
    for (h, k) in gains {
        lumped = lumped.with_port_gain(h, k)?;
    }
    Ok(lumped)
}

/// Admissible interconnections for the robustness LMIs. `H` maps the
/// stacked outputs `w` to the stacked inputs `v`.
#[derive(Debug, Clone, PartialEq)]
pub enum InterconnectionSet {
    /// Vertices of a polytope of interconnection matrices.
    Finite(Vec<Mat>),
    /// `v_A = alpha w_B`, `v_B = alpha w_A` for `alpha` in `[0, 1]`, with
    /// `v = (v_A, v_B)` of sizes `(p, q)` and `w = (w_A, w_B)` of sizes `(q, p)`.
    LinkScaling { p: usize, q: usize },
}

impl InterconnectionSet {
    /// The nominal link `v_A = w_B`, `v_B = w_A`.
    pub fn swap(p: usize, q: usize) -> Self {
        InterconnectionSet::Finite(vec![link_matrix(p, q, 1.0)])
    }

    /// (rows, cols) = (dim v, dim w) shared by every member.
    pub fn dims(&self) -> Result<(usize, usize)> {
        match self {
            InterconnectionSet::LinkScaling { p, q } => Ok((p + q, q + p)),
            InterconnectionSet::Finite(hs) => {
                let first = hs.first().ok_or_else(|| Error::InvalidInput("empty interconnection set".into()))?;
                if hs.iter().any(|h| h.shape() != first.shape()) {
                    return Err(Error::InvalidInput("interconnection generators differ in shape".into()));
                }
                Ok(first.shape())
            }
        }
    }
}

/// `H(alpha)` of the link-scaling family.
pub fn link_matrix(p: usize, q: usize, alpha: f64) -> Mat {
    let mut h = Mat::zeros(p + q, q + p);
    for i in 0..p {
        h[(i, q + i)] = alpha;
    }
    for i in 0..q {
        h[(p + i, i)] = alpha;
    }
    h
}

/// `A + B (I - H D)^{-1} H C` for a plant closed through `H`.
pub fn close_loop(a: &Mat, b: &Mat, c: &Mat, d: &Mat, h: &Mat, tol: &Tolerance) -> Result<Mat> {
    let nv = b.ncols();
    if nv == 0 {
        return Ok(a.clone());
    }
    let lm = Mat::identity(nv, nv) - h * d;
    let condition = linalg::condition_number(&lm);
    if condition.is_nan() || condition >= 1.0 / tol.rank_eps {
        return Err(Error::IllPosed { condition });
    }
    let gain = lm.lu().solve(&(h * c)).ok_or(Error::IllPosed { condition })?;
    Ok(a + b * gain)
}
