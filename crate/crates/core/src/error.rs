use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DebiasError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DebiasError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("line {line}: value {value} outside scale [{min}, {max}]")]
    OutOfScale {
        line: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("line {line}: duplicate rating for user {user:?} and item {item:?}")]
    DuplicateRating {
        line: usize,
        user: String,
        item: String,
    },

    #[error("line {line}: duplicate ground-truth entry for item {item:?}")]
    DuplicateTruth { line: usize, item: String },

    #[error("invalid rating scale [{min}, {max}]: max must exceed min")]
    InvalidScale { min: f64, max: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("rating count must be positive")]
    ZeroCount,

    #[error("dense system too large: {users} users x {items} items exceeds guard")]
    SizeGuard { users: usize, items: usize },

    #[error("linear system is singular (alpha >= 1 or malformed degrees)")]
    Singular,

    #[error("invalid synthetic parameters: {0}")]
    InvalidSynthParams(String),

    #[error("could not draw a graph without isolated nodes after {0} attempts")]
    RetryBudgetExhausted(usize),

    #[error("evaluation needs at least {needed} common item(s), found {found}")]
    InsufficientOverlap { needed: usize, found: usize },

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DebiasError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DebiasError::Io {
            path: path.into(),
            source,
        }
    }
}
