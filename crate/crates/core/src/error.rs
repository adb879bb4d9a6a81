use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate extent: {0}")]
    DegenerateExtent(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("label conflict at {clip_id}@{start_frame}: existing {existing}, new {new}")]
    Conflict {
        clip_id: String,
        start_frame: usize,
        existing: usize,
        new: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value produced by `{op}`")]
    Numeric { op: String },

    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn numeric(op: impl Into<String>) -> Self {
        Error::Numeric { op: op.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
