//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by mixture construction, estimation, and reporting.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The mixture density underflowed to zero at a query point, so
    /// responsibilities are undefined there.
    #[error("degenerate point: total mixture density underflowed to zero")]
    DegeneratePoint,

    /// Every kernel weight underflowed in a mean-shift step.
    #[error("stalled point: all kernel weights underflowed")]
    StalledPoint,

    /// An operation that needs samples received none.
    #[error("empty sample set")]
    EmptySamples,

    /// Too few matched centres to form a confidence ellipse.
    #[error("insufficient matches: got {got}, need at least {need}")]
    InsufficientMatches { got: usize, need: usize },

    /// The empirical covariance of matched centres is rank deficient.
    #[error("degenerate ellipse: matched centres are rank deficient")]
    DegenerateEllipse,

    /// A numeric quantity became non-finite during optimisation.
    #[error("numeric failure: {0}")]
    NonFinite(String),

    /// Filesystem or serialisation failure surfaced through the library.
    #[error("io error: {0}")]
    Io(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// True when the error signals a numeric breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::NonFinite(_)
                | CoreError::DegeneratePoint
                | CoreError::StalledPoint
                | CoreError::DegenerateEllipse
        )
    }
}
