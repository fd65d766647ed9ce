use std::path::PathBuf;

use thiserror::Error;

use crate::geo::LocId;

/// Errors raised while loading data or building, solving and auditing mechanisms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("unknown location id {0}")]
    UnknownId(LocId),

    #[error("duplicate location id {0}")]
    DuplicateId(LocId),

    #[error("context length mismatch: {left} vs {right}")]
    ContextMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no support for key {0}")]
    UnseenKey(String),

    #[error("solver stopped with status {status} (max infeasibility {max_infeasibility:e})")]
    Solver {
        status: crate::lp::LpStatus,
        max_infeasibility: f64,
    },

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Maps a csv error onto either an I/O error or a parse error carrying the line number.
    pub(crate) fn from_csv(path: &std::path::Path, err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(path, e),
            kind => Error::parse(path, line, csv_kind_message(kind)),
        }
    }
}

fn csv_kind_message(kind: csv::ErrorKind) -> String {
    match kind {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { err, .. } => format!("invalid UTF-8: {err}"),
        other => format!("{other:?}"),
    }
}
