use thiserror::Error;

/// Errors produced by the routing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a domain invariant (out-of-range ids, bad replica sets, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The brute-force router refused an instance that is too large to enumerate.
    #[error("brute-force search space of {size} assignments exceeds the guard of {limit}")]
    SearchSpace { size: u128, limit: u128 },

    /// A line of a line-delimited file could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trace contains no batches")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
