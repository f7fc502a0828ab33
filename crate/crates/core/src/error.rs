use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::reducer::Frontier;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// The model answer could not be read as the requested JSON.
    #[error("could not parse model response: {reason}")]
    Parse { reason: String, raw: String },

    #[error("model returned no usable codes")]
    EmptyResult { raw: String },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    /// A duplicate judge answered outside its response contract.
    #[error("judge contract violated: {reason}")]
    JudgeContract { reason: String, raw: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("coding failed at position {position} (interview {interview_id}): {source}")]
    Coding {
        position: usize,
        interview_id: String,
        #[source]
        source: Box<Error>,
    },

    /// Reduction stopped before finishing; `frontier` holds the last completed position.
    #[error("reduction aborted at position {position}, code {code_index}: {source}")]
    Reduction {
        position: usize,
        code_index: usize,
        frontier: Box<Frontier>,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint does not match the code sets (expected digest {expected}, found {found})")]
    DigestMismatch { expected: String, found: String },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn judge_contract(reason: impl Into<String>, raw: impl Into<String>) -> Self {
        Error::JudgeContract { reason: reason.into(), raw: raw.into() }
    }

    /// Innermost error, looking through coding and reduction wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Coding { source, .. } | Error::Reduction { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 config, 3 provider, 4 judge contract, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) => 2,
            Error::Gateway(_) | Error::Embedding(_) => 3,
            Error::JudgeContract { .. } => 4,
            _ => 1,
        }
    }
}
