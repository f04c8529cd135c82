use thiserror::Error;

/// Errors raised by the simulation and geometry routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alpha = {0} lies outside the valid interval (2/3, 1)")]
    AlphaOutOfRange(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("step cap of {cap} exceeded")]
    StepCap { cap: u64 },

    #[error("rejection cap of {cap} attempts exceeded")]
    RejectionCap { cap: u64 },

    #[error("invalid path at index {index}: {reason}")]
    InvalidPath { index: usize, reason: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("graph is disconnected: vertex {0} is unreachable")]
    Disconnected(usize),

    #[error("linear solver did not converge (relative residual {residual:e})")]
    SolverFailed { residual: f64 },

    #[error("invalid correspondence: {0}")]
    InvalidCorrespondence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
