use thiserror::Error;

/// Unified error type for the attack pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A token id outside the vocabulary (or the reserved pad id) was used
    /// where a real behavior was required.
    #[error("invalid token id {id} (vocabulary size {vocab_size}, pad id {pad_id})")]
    InvalidToken {
        id: usize,
        vocab_size: usize,
        pad_id: usize,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("insertion position {position} out of range 1..={max} ")]
    Position { position: usize, max: usize },

    #[error("action selection error: {0}")]
    Action(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("no usable position: {0}")]
    NoPosition(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("instrumentation error: {0}")]
    Instrument(String),

    #[error("program error: {0}")]
    Program(String),

    /// A pipeline stage input is absent; `producer` names the subcommand that
    /// creates it.
    #[error("missing artifact {path} (produce it with `{producer}`)")]
    MissingArtifact { path: String, producer: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
