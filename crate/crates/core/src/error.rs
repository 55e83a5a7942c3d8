use thiserror::Error;

use crate::classical::Agent;

/// Errors raised by the probability, classical, quantum, process and agreement layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative mass {value:e} at flat index {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("total mass {total} is not within {tol:e} of 1")]
    NotNormalized { total: f64, tol: f64 },

    #[error("marginal requested over an empty set of axes")]
    EmptyAxes,

    #[error("conditioning on a set of probability {mass:e} (tolerance {tol:e})")]
    ZeroProbabilityConditioning { mass: f64, tol: f64 },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid outcome space: {0}")]
    InvalidSpace(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("cell {cell} of {agent:?}'s partition has zero prior mass")]
    ZeroMassCell { agent: Agent, cell: usize },

    #[error("state {0} is not in the state space")]
    InvalidState(usize),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("instrument is not trace preserving (deviation {deviation:e})")]
    NotTracePreserving { deviation: f64 },

    #[error("invalid process matrix: {0}")]
    InvalidProcess(String),

    #[error("bad mixture weights: {0}")]
    BadWeights(String),

    #[error("announcement protocol did not converge within {0} rounds")]
    NoConvergence(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
