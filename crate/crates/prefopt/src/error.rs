use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A prompt or completion index is outside the space it was used against.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Two objects that must share a `PromptSpace` (or a length) do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter violates its documented precondition.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested divergence is infinite (absolute continuity fails).
    #[error("infinite divergence: {0}")]
    InfiniteDivergence(String),

    /// An iterative solver stopped without meeting its convergence criterion.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
