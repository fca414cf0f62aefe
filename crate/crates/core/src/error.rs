use thiserror::Error;

/// Errors raised by the exact and Monte Carlo machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidPmf(String),

    #[error("refusing to sample: tail mass {tail:e} exceeds threshold {threshold:e}")]
    TailTooLarge { tail: f64, threshold: f64 },

    #[error("window too large: {atoms} atoms exceeds limit {limit} (shrink the window or the cap)")]
    TooLargeWindow { atoms: u128, limit: u128 },

    #[error("window width {width} exceeds the enumeration maximum {max}")]
    TooWideWindow { width: usize, max: usize },

    #[error("state cap {cap} is below {required}, the cap needed to meet the tail budget")]
    CapTooSmall { cap: usize, required: usize },

    #[error("alphabet too large for exact enumeration: {size} atoms exceeds cap {cap}")]
    TooLargeAlphabet { size: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid delta bound `{name}`: delta({epsilon}) = {delta}")]
    InvalidBound { name: String, epsilon: f64, delta: f64 },

    #[error("insufficient data: {usable} usable points, need at least {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Whether the error reports a computation that exceeded a size limit
    /// rather than bad input.
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            Error::TooLargeWindow { .. }
                | Error::TooWideWindow { .. }
                | Error::CapTooSmall { .. }
                | Error::TooLargeAlphabet { .. }
                | Error::TailTooLarge { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
