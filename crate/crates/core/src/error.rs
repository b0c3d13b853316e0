use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The physical regime required by a formula does not hold.
    #[error("regime error: {0}")]
    Regime(String),

    /// A request would exceed a configured size limit.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A sampling step is too coarse for the requested noise process.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// A schedule file could not be parsed.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
