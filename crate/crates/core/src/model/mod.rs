//! Systems, supplies, storage certificates and interconnection networks.

mod network;
mod supply;
mod system;

use std::fmt;

pub(crate) use network::compose;
pub use network::{close_loop, closed_loop_matrix, link_matrix, well_posedness, Edge, InterconnectionSet, NetworkGraph, WellPosedness};
pub use supply::{QuadraticSupply, StorageCertificate};
pub use system::{LtiSystem, Plant, Port, StateSpace};

/// Identifier of a system in a network; ports are keyed by the neighbour's id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SystemId(pub u32);

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}
