//! Additive quadratic Lyapunov certificates and interconnection-neutral
//! supply functions for networks of linear time-invariant systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense symmetric kernels and tolerance gates,
//! * [`model`] systems, supplies, storage certificates and networks,
//! * [`lmi`] dissipativity/robustness LMIs and a small SDP feasibility engine,
//! * [`decompose`] closed-form neutral supply pairs for a two-system split,
//! * [`netgraph`] graph machinery and the network-level decomposition,
//! * [`robustness`] link-scaling and removal certificates,
//! * [`cli`] file format, reports and the command-line front end.

pub mod cli;
pub mod decompose;
mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod netgraph;
pub mod robustness;

pub use error::{Error, Result};
pub use linalg::{Mat, SymMat, Tolerance};
pub use model::{LtiSystem, NetworkGraph, QuadraticSupply, StorageCertificate, SystemId};
