use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// An argument outside the domain of an operation (bad index, empty set).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Wrong magic, unknown version or otherwise unreadable dump.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// A structurally valid dump whose lengths or shapes do not add up.
    #[error("corrupt dump {path}: {section}: {detail}")]
    Corruption {
        path: PathBuf,
        section: String,
        detail: String,
    },

    #[error("mapping error: {0}")]
    Mapping(#[from] MappingError),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("table error in {path}: {source}")]
    Table {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        CoreError::Json {
            path: path.into(),
            source,
        }
    }
}

/// Failures while bridging annotation words and model subwords.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    /// Words (1-based) whose character span overlaps no non-special subword.
    #[error("words without overlapping subwords: {words:?}")]
    UnmappedWords { words: Vec<usize> },

    /// A word token could not be located in the text the model saw.
    #[error("word {word} ({token:?}) not found in model text after char {from}")]
    WordNotInText {
        word: usize,
        token: String,
        from: usize,
    },

    #[error("segment word {word} outside sentence of {len} words")]
    WordOutOfRange { word: usize, len: usize },
}
