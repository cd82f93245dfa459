use thiserror::Error;

pub type Result<T> = std::result::Result<T, AmcmcError>;

/// Errors surfaced by graph construction, geometry evaluation and the
/// integrators.
#[derive(Debug, Error)]
pub enum AmcmcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("positivity violation: {0}")]
    PositivityViolation(String),

    #[error("detailed balance violation: {0}")]
    DetailedBalanceViolation(String),

    #[error("step too large: {0}")]
    StepTooLarge(String),

    #[error("step size underflow: {0}")]
    StepUnderflow(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical rank error: {0}")]
    NumericalRankError(String),
}
