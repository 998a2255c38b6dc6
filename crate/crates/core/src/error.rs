use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {op} got {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("cosine similarity of a zero-norm vector ({0})")]
    ZeroNorm(&'static str),

    #[error("backward already ran on this record; reset it first")]
    BackwardTwice,

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{0}: no valid records")]
    NoRecords(PathBuf),

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),

    #[error("query `{0}` has no in-vocabulary tokens")]
    UntrainableQuery(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("window has {got} entries, model needs {want}")]
    ShortWindow { got: usize, want: usize },

    #[error("unknown {kind} `{key}`")]
    Unknown { kind: &'static str, key: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
