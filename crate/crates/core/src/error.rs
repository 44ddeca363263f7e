use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported link {0:?} (expected \"probit\" or \"logit\")")]
    UnsupportedLink(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },

    #[error("rank-deficient {design} design: column(s) {} are linearly dependent on earlier columns", columns.join(", "))]
    RankDeficient { design: &'static str, columns: Vec<String> },

    #[error("information matrix is not positive definite; inspect the eigenvalue diagnostics or the ridge path")]
    NotPositiveDefinite,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("row {row}, column {column:?}: {reason}")]
    Cell { row: usize, column: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
