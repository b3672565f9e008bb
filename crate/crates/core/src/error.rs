use thiserror::Error;

/// Errors raised by the estimators and their building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular design: condition number {condition:.3e} exceeds {limit:.1e}")]
    SingularDesign { condition: f64, limit: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("x = {x} lies outside the interior band [zeta, 1 - zeta] with zeta = {zeta}")]
    Boundary { x: f64, zeta: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, DpError>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> DpError {
    DpError::InvalidParameter(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> DpError {
    DpError::InvalidInput(msg.into())
}
