use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("no questions")]
    NoQuestions,

    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("question `{0}` has no gold answer")]
    EmptyGold(String),

    #[error("data mismatch: {0}")]
    Mismatch(String),

    #[error("invalid {kind} file: {message}")]
    Format { kind: &'static str, message: String },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by inconsistent inputs (run vs. gold, paired
    /// systems) rather than bad configuration or unreadable files.
    pub fn is_data_mismatch(&self) -> bool {
        matches!(
            self,
            Error::Mismatch(_) | Error::EmptyGold(_) | Error::LengthMismatch { .. }
        )
    }
}
