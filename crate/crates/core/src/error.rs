use std::path::PathBuf;

use crate::network::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode of the library.
///
/// Variants split into validation errors (bad input, reported by the CLI with
/// exit code 2) and pipeline errors (exit code 3); see [`Error::is_validation`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid flow function: {0}")]
    InvalidFlowSpec(String),
    #[error("invalid injection model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("operational edges contain a cycle through edge ({0}, {1})")]
    CycleDetected(NodeId, NodeId),
    #[error("node {0} is not connected to the reference")]
    Disconnected(NodeId),
    #[error("expected {expected} operational edges, found {found}")]
    WrongEdgeCount { expected: usize, found: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("flow has {found} commodities, flow function expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("flow function cannot be inverted: {0}")]
    NotInvertible(String),
    #[error("no flow function known for edge ({0}, {1})")]
    UnknownEdgeSpec(NodeId, NodeId),

    #[error("at least {required} samples are required, got {found}")]
    InsufficientSamples { required: usize, found: usize },
    #[error("node {0} has no measurement column")]
    UnmeasuredNode(NodeId),
    #[error("candidate graph is disconnected into {} components", .0.len())]
    DisconnectedCandidates(Vec<Vec<NodeId>>),

    #[error("linear oracle requires linear flow functions, edge ({0}, {1}) is not")]
    NonlinearSpec(NodeId, NodeId),
    #[error("brute-force enumeration too large: {0}")]
    TooLarge(String),
    #[error("requested {requested} fictitious edges, only {available} non-tree pairs exist")]
    TooManyFictitious { requested: usize, available: usize },
    #[error("learned topology has {learned} edges, reference has {truth}")]
    SizeMismatch { learned: usize, truth: usize },

    #[error("malformed input {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than a failing
    /// computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidNetwork(_)
                | Error::InvalidFlowSpec(_)
                | Error::InvalidModel(_)
                | Error::InvalidConfig(_)
                | Error::CycleDetected(..)
                | Error::Disconnected(_)
                | Error::WrongEdgeCount { .. }
                | Error::UnknownNode(_)
                | Error::DimensionMismatch { .. }
                | Error::UnmeasuredNode(_)
                | Error::TooManyFictitious { .. }
                | Error::SizeMismatch { .. }
                | Error::Parse { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
