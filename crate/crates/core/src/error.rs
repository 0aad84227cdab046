use thiserror::Error;

use crate::graph::Pair;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {0} is isolated (degree 0)")]
    IsolatedNode(usize),

    #[error("invalid edit ({}, {}): {reason}", .pair.0, .pair.1)]
    InvalidEdit { pair: Pair, reason: String },

    #[error("infeasible budget {requested}: at most {max_feasible} edits are available")]
    Infeasible { requested: usize, max_feasible: usize },

    #[error("split failed: {0}")]
    Split(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
