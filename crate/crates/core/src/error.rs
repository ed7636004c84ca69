use alloc::string::String;

/// Errors raised by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The gradient field is not curl-free within tolerance.
    #[error("inconsistent gradient field: curl residual {residual:e} exceeds {tolerance:e}")]
    InconsistentField { residual: f64, tolerance: f64 },
    #[error("division by zero: {0}")]
    DivisionByZero(String),
    #[error("problem too large for explicit evaluation: {0}")]
    TooLarge(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
