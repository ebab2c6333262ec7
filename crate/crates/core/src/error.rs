use thiserror::Error;

/// Errors produced by the numerics in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit: {what} exceeds the configured cap of {cap}")]
    ResourceLimit { what: String, cap: u64 },

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unsatisfiable at machine-integer scale for n = {failing:?}: {reason}")]
    UnsatisfiableAtScale { failing: Vec<usize>, reason: String },

    #[error("precondition not verified: {0}")]
    PreconditionUnverified(String),

    #[error("consolidation error: {0}")]
    Consolidation(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
