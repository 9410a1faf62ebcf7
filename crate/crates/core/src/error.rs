use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error: missing required column `{column}`")]
    MissingColumn { column: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing observation for {what} on {date}")]
    MissingDate { what: String, date: NaiveDate },
    #[error("unknown authority `{0}` (not in population table)")]
    UnknownAuthority(String),
    #[error("rank deficient design: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from bad input data rather than from
    /// estimation.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::RankDeficient { .. } | Error::Numerical(_))
    }
}
