use thiserror::Error;

/// Errors raised by the covariance-matrix control library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operation requires {expected} modes, got {actual}")]
    WrongModeCount { expected: usize, actual: usize },

    #[error("symplectic eigenvalue moduli do not pair up: {left} vs {right}")]
    Pairing { left: f64, right: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input")]
    EmptyInput,

    #[error("field grid does not match: expected {expected} nodes, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("mean-field iteration did not converge: last iterates |alpha|^2 = {previous}, {last}")]
    MeanFieldNonConvergence { previous: f64, last: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
