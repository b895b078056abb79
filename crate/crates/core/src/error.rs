use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("length mismatch between parents: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// A generator or extractor returned something unusable. `index` is the
    /// offending batch member, when one can be blamed.
    #[error("model failure{}: {message}", .index.map(|i| format!(" at batch index {i}")).unwrap_or_default())]
    ModelFailure {
        index: Option<usize>,
        message: String,
    },

    #[error("population has unevaluated members")]
    UnevaluatedPopulation,

    #[error("empty score list: {0}")]
    EmptyScores(&'static str),

    #[error("user {0} has too few samples for a type-II attack")]
    InsufficientSamples(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("bridge timed out after {0:?}")]
    Timeout(Duration),

    #[error("protocol version mismatch: client speaks {expected}, server speaks {got}")]
    VersionMismatch { expected: u32, got: u32 },

    #[error("server reported error: {0}")]
    Server(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn model(index: Option<usize>, message: impl Into<String>) -> Self {
        Error::ModelFailure {
            index,
            message: message.into(),
        }
    }

    /// Short machine-readable kind, used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::ZeroVector => "zero-vector",
            Error::LengthMismatch(..) => "length-mismatch",
            Error::ModelFailure { .. } => "model-failure",
            Error::UnevaluatedPopulation => "unevaluated-population",
            Error::EmptyScores(_) => "empty-scores",
            Error::InsufficientSamples(_) => "insufficient-samples",
            Error::Protocol(_) => "protocol",
            Error::Timeout(_) => "timeout",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::Server(_) => "server-error",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 1 internal, 2 user input, 3 bridge/protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. }
            | Error::ZeroVector
            | Error::EmptyScores(_)
            | Error::InsufficientSamples(_)
            | Error::Parse(_)
            | Error::Io(_) => 2,
            Error::Protocol(_)
            | Error::Timeout(_)
            | Error::VersionMismatch { .. }
            | Error::Server(_) => 3,
            Error::LengthMismatch(..)
            | Error::ModelFailure { .. }
            | Error::UnevaluatedPopulation => 1,
        }
    }
}
