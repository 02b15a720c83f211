//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input (dimension mismatches, bad parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// The kernel weight is infinite for the empty and grand coalitions;
    /// those coalitions are handled by the regression constraints instead.
    #[error("kernel weight is infinite for the empty and grand coalitions")]
    InfiniteKernelWeight,

    /// A linear system was singular or too ill-conditioned to solve reliably.
    #[error("degenerate linear system (condition estimate {condition:.3e})")]
    DegenerateSystem { condition: f64 },

    /// The empirical moment matrix is singular; more samples are needed.
    #[error("insufficient samples: empirical moment matrix is singular")]
    InsufficientSamples,

    /// A brute-force enumeration was requested above its player-count cap.
    #[error("player count {d} exceeds the enumeration cap {cap}; use a sampling estimator")]
    EnumerationTooLarge { d: usize, cap: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A synthetic game spec or data file failed to parse.
    #[error("parse error: {0}")]
    Parse(String),
}
