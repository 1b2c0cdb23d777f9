use thiserror::Error;

use crate::model::SystemId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("columns are not orthonormal: {0}")]
    InvalidBasis(String),
    #[error("pivot block is singular")]
    SingularPivot,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("interconnection is ill-posed (condition number {condition:e})")]
    IllPosed { condition: f64 },
    #[error("hypothesis violated: {which} (margin {margin:e})")]
    HypothesisViolated { which: String, margin: f64 },
    #[error("rank assumption fails: {0}")]
    RankAssumption(String),
    #[error("storage is not a Lyapunov function for the closed loop (margin {margin:e})")]
    NotALyapunovFunction { margin: f64 },
    #[error("gamma search exhausted after {doublings} doublings")]
    GammaSearchExhausted { doublings: u32 },
    #[error("undecided: {0}")]
    Undecided(String),
    #[error("edge ({0}, {1}) lies on a cycle")]
    CycleDetected(SystemId, SystemId),
    #[error("network graph is not acyclic; group systems into a tree first")]
    NotAcyclic,
    #[error("unknown system {0}")]
    UnknownSystem(SystemId),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn hypothesis(which: impl Into<String>, margin: f64) -> Self {
        Error::HypothesisViolated { which: which.into(), margin }
    }
}
