use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("observable library must not be empty")]
    EmptyLibrary,

    #[error("observable index {index} outside catalog of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("duplicate observable index {0}")]
    DuplicateIndex(usize),

    #[error("state diverged at t = {t}: {what}")]
    Divergence { t: f64, what: &'static str },

    #[error("history stack is full (capacity {capacity})")]
    StackFull { capacity: usize },

    #[error("flow is singular: g^T (2A)^(r+1) g = {denominator} with delta = 0")]
    SingularFlow { denominator: f64 },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
