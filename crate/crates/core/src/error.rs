use thiserror::Error;

/// Errors raised by the sampling, training and accounting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the set where the requested quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constant was requested outside the parameter range of the bound that defines it.
    #[error("regime violation in {bound}: {detail}")]
    Regime { bound: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for dataset of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dataset must contain at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("datasets are not neighbors: {0}")]
    NotNeighbors(String),

    /// A chain produced a non-finite iterate.
    #[error("chain diverged at step {step}{}", replica.map(|r| format!(" (replica {r})")).unwrap_or_default())]
    Divergence { step: usize, replica: Option<usize> },

    #[error("gradient descent did not reach tolerance {tol} within {iters} iterations")]
    NoConvergence { tol: f64, iters: usize },

    #[error("histogram estimator supports dimension <= 3, got {0}")]
    UnsupportedDimension(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
