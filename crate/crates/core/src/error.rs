use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: self-loop on node `{node}`")]
    SelfLoop { line: usize, node: String },

    #[error("line {line}: negative {what} {value} on edge {src} -> {dst}")]
    NegativeWeight {
        line: usize,
        what: &'static str,
        value: f64,
        src: String,
        dst: String,
    },

    #[error("line {line}: duplicate edge {src} -> {dst}")]
    DuplicateEdge { line: usize, src: String, dst: String },

    #[error("line {line}: edge {src} -> {dst} has no cost column and no cost convention was given")]
    MissingCost { line: usize, src: String, dst: String },

    #[error("graph is not strongly connected: node `{node}` is not {direction} node `{root}`")]
    NotStronglyConnected {
        node: String,
        root: String,
        direction: &'static str,
    },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: String,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("target {target}: {source}")]
    AtTarget {
        target: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: impl ToString, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    /// True when the error (possibly wrapped in node/target context) is a solver non-convergence.
    pub fn is_non_convergence(&self) -> bool {
        match self {
            Error::NonConvergence { .. } => true,
            Error::AtNode { source, .. } | Error::AtTarget { source, .. } => source.is_non_convergence(),
            _ => false,
        }
    }
}
