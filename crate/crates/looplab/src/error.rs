use thiserror::Error;

/// Errors produced by domain construction, enumeration, and verification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("embedding invalid: {0}")]
    EmbeddingInvalid(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("malformed configuration: {0}")]
    MalformedConfiguration(String),

    /// Parameters sit on a measure-zero set where an elimination pivot or
    /// prefactor vanishes; `factor` names the offending expression.
    #[error("degenerate parameters: |{factor}| = {value:.3e} below cutoff")]
    DegenerateParameters { factor: String, value: f64 },

    #[error("boundary mismatch: {0}")]
    BoundaryMismatch(String),

    /// An internal cross-check between an enumerated quantity and its closed
    /// form exceeded the pinned tolerance.
    #[error("check failed: {key} deviates by {deviation:.3e}")]
    CheckFailed { key: String, deviation: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
