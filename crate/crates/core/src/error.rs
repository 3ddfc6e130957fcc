use std::path::PathBuf;

use crate::month::Month;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid month {0:?} (expected YYYY-MM)")]
    InvalidMonth(String),

    #[error("empty reference corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("token id {id} out of range (table has {rows} rows)")]
    TokenOutOfRange { id: usize, rows: usize },

    #[error("snapshot does not match: {0}")]
    SnapshotMismatch(String),

    #[error("month {0} is missing from the corpus")]
    MissingMonth(Month),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("rank-deficient design matrix; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by configuration or file access rather than by the computation.
    pub fn is_config_or_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Config(_) | Error::InvalidMonth(_)
        )
    }
}
