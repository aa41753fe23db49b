use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("shape mismatch: {left} vs {right} in {context}")]
    ShapeMismatch {
        left: String,
        right: String,
        context: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate mix: {0}")]
    DegenerateMix(&'static str),

    #[error("room geometry error: {0}")]
    Geometry(String),

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("insufficient enrollment audio: {have:.2} s, need at least {need:.2} s")]
    InsufficientEnrollment { have: f64, need: f64 },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("wav error in {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    TomlParse(String),
}

impl Error {
    /// Process exit code per the CLI contract: 1 for user errors, 2 for
    /// internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence(_) | Error::Checkpoint(_) => 2,
            _ => 1,
        }
    }
}
