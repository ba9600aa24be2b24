use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field is out of its admissible range.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// A caller broke an operation's precondition (shape, length, range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("out-of-vocabulary symbol `{token}` for predicate `{predicate}`")]
    OutOfVocabulary { predicate: String, token: String },

    #[error("clause {0} not found")]
    NotFound(usize),

    #[error("invalid clause: {0}")]
    Validation(String),

    /// Execution reached an agent for which no action clause applies.
    #[error("no applicable action clause for {agent} in state {state}")]
    Coverage { agent: String, state: String },

    #[error("missing artifacts: {}", display_paths(.0))]
    MissingArtifact(Vec<PathBuf>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
