use thiserror::Error;

use crate::network::NodeId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    /// A token walked further than any terminating walk can: the network has
    /// a non-positive circuit, or an enhanced-policy token is trapped in a
    /// region with no path to a sink.
    #[error("walk from {start} exceeded {cap} transitions (non-positive circuit or no way out to a sink)")]
    WalkDiverged { start: NodeId, cap: usize },

    #[error("relaxation did not converge within {0} steps (non-positive circuit)")]
    RelaxationDiverged(usize),

    #[error("settling exceeded {0} walks")]
    SettleDiverged(usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
