use thiserror::Error;

/// Errors raised by the expansion library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid block structure: {0}")]
    InvalidStructure(String),

    #[error("dilation factor must be positive, got {0}")]
    NonPositiveDilation(f64),

    #[error("coordinate {index} is outside the diffusive block (p0 = {p0})")]
    NotInFirstBlock { index: usize, p0: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("jets do not share a base point")]
    BasePointMismatch,

    #[error("jet mismatch: {0}")]
    JetMismatch(String),

    #[error("finite-difference jets are limited to order 4, requested {0}")]
    JetOrderTooHigh(usize),

    #[error("insufficient jet order: need {needed}, have {available}")]
    InsufficientJet { needed: usize, available: usize },

    #[error("expansion order {requested} exceeds the supported maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("maturity must exceed the current time (t = {t}, T = {maturity})")]
    NonPositiveHorizon { t: f64, maturity: f64 },

    #[error("quadrature did not converge: relative change {change:.3e} after doubling to {points} points")]
    QuadratureNonConvergence { change: f64, points: usize },

    #[error("non-finite state on path {path} at step {step}")]
    NonFinitePath { path: usize, step: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot parse multi-index {0:?}")]
    ParseMultiIndex(String),
}

pub type Result<T> = std::result::Result<T, Error>;
