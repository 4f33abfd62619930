use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the embir pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("index format version mismatch: file has v{found}, this build reads v{expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("index checksum error: {0}")]
    Checksum(String),

    #[error(
        "analyzer fingerprint mismatch: index was built with {index}, query analyzed with {query}"
    )]
    FingerprintMismatch { index: String, query: String },

    #[error("term `{term}` does not occur in document ordinal {doc}")]
    TermNotInDocument { term: String, doc: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("duplicate relevance judgment for topic `{topic}`, document `{doc}`")]
    DuplicateJudgment { topic: String, doc: String },

    #[error("{0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (flags, config files),
    /// as opposed to problems with the data being processed.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParam(_))
    }
}
