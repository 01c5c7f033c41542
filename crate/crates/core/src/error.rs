use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("knowledge graph is empty")]
    EmptyGraph,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("could not parse generation output after {attempts} attempts: missing {missing}")]
    GenerationParse {
        attempts: usize,
        missing: String,
        raw: String,
    },

    #[error("evidence chain label mismatch after {attempts} attempts: expected {expected}, got {got}")]
    EvidenceMismatch {
        attempts: usize,
        expected: String,
        got: String,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transcript miss for prompt hash {0}")]
    TranscriptMiss(String),

    #[error("annotator {annotator} is not assigned to task {task}")]
    Unauthorized { annotator: String, task: u64 },

    #[error("annotator {annotator} already submitted a verdict for task {task}")]
    Conflict { annotator: String, task: u64 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("schema violation in record {id}: {message}")]
    Schema { id: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Process exit code for CLI reporting: 2 for transport failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Transport(_) | Error::Protocol(_) => 2,
            _ => 1,
        }
    }
}
