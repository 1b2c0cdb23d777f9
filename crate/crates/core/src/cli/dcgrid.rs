//! The three-converter DC grid: a load, a battery and a second load on a
//! line of transmission lines, each converter seen through its voltage gain.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::linalg::{Mat, SymMat};
use crate::model::{Edge, LtiSystem, NetworkGraph, SystemId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcGridParameters {
    pub line_resistance: f64,
    pub line_inductance: f64,
    pub capacitance: f64,
    pub first_load: f64,
    pub second_load: f64,
    pub gains: [f64; 3],
}

impl Default for DcGridParameters {
    fn default() -> Self {
        DcGridParameters {
            line_resistance: 1.0,
            line_inductance: 1e-3,
            capacitance: 10.0,
            first_load: 20.0,
            second_load: 20.0,
            gains: [0.3953, 0.1634, 0.7785],
        }
    }
}

fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

pub fn dcgrid_network(p: &DcGridParameters) -> Result<NetworkGraph> {
    let (r, l, k) = (p.line_resistance, p.line_inductance, p.capacitance);
    let [d1, d2, d3] = p.gains;
    let (one, two, three) = (SystemId(1), SystemId(2), SystemId(3));
    let b12 = 1.0 / (d1 * d2 * l);
    let b23 = 1.0 / (d2 * d3 * l);

    let g1 = LtiSystem::new(scalar(-(r + p.first_load / (d1 * d1)) / l))?.with_port(two, scalar(b12), scalar(p.first_load), None)?;
    let g3 =
        LtiSystem::new(scalar(-(r + 2.0 * p.second_load / (d3 * d3)) / l))?.with_port(two, scalar(b23), scalar(p.second_load), None)?;
    let a2 = Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0 / (d2 * d2 * k * l), -r / l]);
    let voltage = Mat::from_row_slice(1, 2, &[1.0 / k, 0.0]);
    let g2 = LtiSystem::new(a2)?.with_port(one, Mat::from_column_slice(2, 1, &[0.0, b12]), voltage.clone(), None)?.with_port(
        three,
        Mat::from_column_slice(2, 1, &[0.0, b23]),
        voltage,
        None,
    )?;

    let systems = BTreeMap::from([(one, g1), (two, g2), (three, g3)]);
    let edges = [(1, 2), (2, 1), (2, 3), (3, 2)].into_iter().map(|(s, d)| Edge { src: SystemId(s), dst: SystemId(d), dim: 1 }).collect();
    NetworkGraph::new(systems, edges)
}

/// The published storage blocks, rounded to four decimals.
pub fn published_storage() -> BTreeMap<SystemId, SymMat> {
    BTreeMap::from([
        (SystemId(1), SymMat::scalar(3.3282)),
        (SystemId(2), SymMat::symmetrize(&Mat::from_row_slice(2, 2, &[14.3127, 0.0261, 0.0261, 0.0069]))),
        (SystemId(3), SymMat::scalar(2.3523)),
    ])
}

/// Published supplies as `(q, s, r)` on the port of the first id facing the second.
pub fn published_supplies() -> BTreeMap<(SystemId, SystemId), [f64; 3]> {
    BTreeMap::from([
        ((SystemId(1), SystemId(2)), [4754.6, 1543.5, -1637.6]),
        ((SystemId(2), SystemId(1)), [1637.6, -1543.5, -4754.6]),
        ((SystemId(2), SystemId(3)), [608.0, -506.8, -2298.6]),
        ((SystemId(3), SystemId(2)), [2298.6, 506.8, -608.0]),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realisation_entries() {
        let net = dcgrid_network(&DcGridParameters::default()).unwrap();
        let a1 = net.system(SystemId(1)).unwrap().a()[(0, 0)];
        assert!((a1 / -1.2899e5 - 1.0).abs() < 1e-4, "{a1}");
        let g2 = net.system(SystemId(2)).unwrap();
        for j in [1, 3] {
            let c = &g2.port(SystemId(j)).unwrap().c;
            assert_eq!((c[(0, 0)], c[(0, 1)]), (0.1, 0.0));
        }
    }
}
