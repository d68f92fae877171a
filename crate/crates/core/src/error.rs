use thiserror::Error;

/// Errors raised by the testing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlmError {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in size do not.
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("sample too small: need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },

    /// Requested projection dimension is not admissible.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A basis supplied by the caller is numerically rank deficient.
    #[error("rank-deficient basis: {0}")]
    RankDeficient(String),

    #[error("eigen-solver failure: {0}")]
    EigenFailure(String),

    /// A rate scan did not reach the bias/variance crossing.
    #[error("scan bound too small: {0}")]
    ScanBound(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl FlmError {
    /// True when the failure comes from numerical computation rather than
    /// from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, FlmError::EigenFailure(_) | FlmError::ScanBound(_))
    }
}

pub type Result<T> = std::result::Result<T, FlmError>;
