use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// The inputs violate a stated hypothesis, e.g. two coincident data points.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// An iterative routine failed to converge or a matrix is too ill-conditioned.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A requested sample would exceed the memory budget.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Rejection sampling or similar configuration-dependent search gave up.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
