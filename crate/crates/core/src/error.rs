use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] io::Error),

    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    /// Parallel inputs disagree in length, or ids do not line up.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("incompatible model file: {0}")]
    Incompatible(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("empty sentence")]
    EmptySentence,

    #[error("empty source sentence and NULL word disabled")]
    EmptySource,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pair id {0} not present in score table")]
    MissingId(u64),

    #[error("duplicate pair id {id} at line {line}")]
    DuplicateId { id: u64, line: usize },

    #[error("scoring failed for pair {id}: {source}")]
    Scoring {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
