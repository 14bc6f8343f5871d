use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },

    #[error("unknown agent {0}")]
    UnknownAgent(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("network architectures differ")]
    ArchitectureMismatch,

    #[error("{0}")]
    InvalidTopology(String),

    #[error("{mode} influence needs a center cell; {rows}x{cols} has none (set `center`)")]
    NoCenter {
        mode: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("period bound {0} too large (max 12)")]
    PeriodTooLarge(usize),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("training diverged at episode {episode}, step {step}, agent {agent}: {what} is not finite")]
    Diverged {
        episode: usize,
        step: usize,
        agent: usize,
        what: &'static str,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::ConfigParse { .. } | Error::InvalidConfig { .. } | Error::UnknownPreset(_) => "config",
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Checkpoint(_) | Error::Metrics(_) | Error::Plot(_) => "io",
            Error::Diverged { .. } => "diverged",
            _ => "runtime",
        }
    }

    /// Process exit code for `category`.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "diverged" => 4,
            _ => 1,
        }
    }
}
