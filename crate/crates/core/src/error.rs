use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer {layer} has {found} nodes, expected {expected}")]
    MismatchedLayers {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("replica (node {node}, layer {layer}) is out of range")]
    ReplicaOutOfRange { node: usize, layer: usize },

    #[error("observer budget {0} is too small, at least 2 observers are required")]
    BudgetTooSmall(usize),

    /// Fewer than two observers were infected, so no delay vector exists.
    #[error("unusable realization: only {infected} observer(s) infected")]
    UnusableRealization { infected: usize },

    #[error("observer {observer} is unreachable from candidate {candidate}")]
    Unreachable {
        candidate: crate::graph::ReplicaId,
        observer: crate::graph::ReplicaId,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
