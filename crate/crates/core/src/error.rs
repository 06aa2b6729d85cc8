use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
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

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown tag `{0}`")]
    UnknownTag(String),

    #[error("overlapping spans at token {0}")]
    OverlappingSpans(usize),

    #[error("empty training data")]
    EmptyData,

    #[error("{0}")]
    Underdetermined(String),

    #[error("GraphFeat can only be used transductively: graph posteriors are required for the evaluation sentences")]
    TransductiveOnly,

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("no valid corruption exists for {0}")]
    NoCorruption(String),

    #[error("corrupt store: {0}")]
    CorruptStore(String),

    #[error("linker lookup failed for `{0}`")]
    Unresolved(String),

    #[error("empty candidate set: {0}")]
    EmptyCandidates(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
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
}
