use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot ingest {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("numerical failure: {reason} (residual {residual:e})")]
    Numerical { reason: String, residual: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("seeding failed: {0}")]
    Seeding(String),

    #[error("graph not solvable: a connected component of {component_size} nodes carries no seed")]
    Solvability { component_size: usize },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn ingest(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Ingest {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
