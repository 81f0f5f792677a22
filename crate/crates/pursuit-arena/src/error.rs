use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code contract:
/// everything except `Divergence` is a usage/config/data problem (exit 2),
/// `Divergence` aborts training (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at `{key}`: {message}")]
    Parse { key: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("no spots of interest configured")]
    MissingTarget,

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("unknown robot id `{0}`")]
    UnknownRobot(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("roster mismatch: {0}")]
    RosterMismatch(String),

    #[error("replay buffer has {size} transitions, batch needs {batch}")]
    BufferTooSmall { size: usize, batch: usize },

    #[error("training diverged at {context}: {what}")]
    Divergence { context: String, what: String },

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
