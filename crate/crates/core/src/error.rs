use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("event outside observation window: {0}")]
    OutOfWindow(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unstable excitation matrix: spectral radius {0:.6} >= 1")]
    Unstable(f64),

    #[error("compute budget exceeded: {0}")]
    Budget(String),

    #[error("missing precomputed statistic: {0}")]
    MissingStatistic(&'static str),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("non-positive intensity at event {event} of process {process}")]
    ZeroIntensity { process: usize, event: usize },

    #[error("cache error: {0}")]
    Cache(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
