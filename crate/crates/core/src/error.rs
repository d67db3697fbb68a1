use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value outside the domain of a quantization operation.
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("shape error: {0}")]
    Shape(&'static str),
    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(&'static str),
    #[error("invalid machine config: {0}")]
    InvalidConfig(&'static str),
}
