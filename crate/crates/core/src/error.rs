use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart")]
    OutOfChart { point: Vec<f64> },

    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { point: Vec<f64>, min_eigenvalue: f64 },

    #[error("generalized eigenproblem failed at {point:?}")]
    EigFailure { point: Vec<f64> },

    #[error("non-finite value while evaluating {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid initial data: {0}")]
    InvalidInit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} is outside the covered interval [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("trajectory does not blow up: {0}")]
    NotABlowup(String),

    #[error("comparison hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("profile H vanishes at the declared witness point")]
    ZeroProfile,
}
