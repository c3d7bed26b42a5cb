use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by model construction, the solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("reward parameters diverged at iteration {iteration}{}", cluster.map(|c| format!(" (cluster {c})")).unwrap_or_default())]
    Divergence {
        iteration: usize,
        cluster: Option<usize>,
    },

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stamps the iteration and cluster onto a divergence error.
    pub(crate) fn at(self, iteration: usize, cluster: Option<usize>) -> Self {
        match self {
            Error::Divergence { .. } => Error::Divergence { iteration, cluster },
            other => other,
        }
    }
}
