use std::path::PathBuf;

use thiserror::Error;

use crate::dataio::Month;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("row {row}: cannot parse date {value:?}")]
    DateParse { row: usize, value: String },

    #[error("row {row}: cannot parse value {value:?} in column {column:?}")]
    ValueParse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("panel structure: {0}")]
    Structure(String),

    #[error("unknown series {0:?}")]
    UnknownSeries(String),

    #[error("log transform of non-positive value {value} in {series:?} at {date}")]
    NonPositiveLog {
        series: String,
        date: Month,
        value: f64,
    },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("training diverged at {origin}: {detail}")]
    Diverged { origin: Month, detail: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("incomplete results, missing {} configuration(s): {}", .0.len(), .0.join(", "))]
    Incomplete(Vec<String>),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("at origin {origin}: {source}")]
    AtOrigin {
        origin: Month,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
