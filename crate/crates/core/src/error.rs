use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyEdgeList,

    #[error("self-loop at vertex {0} is not allowed in a simple graph")]
    SelfLoopInSimple(usize),

    #[error("duplicate edge {{{0}, {1}}} is not allowed in a simple graph")]
    DuplicateInSimple(usize, usize),

    #[error("vertex {vertex} out of range for a graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("infeasible insertion order: edge {edge} at step {step} does not touch the earlier prefix")]
    InfeasibleOrder { step: usize, edge: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("unsupported for this graph mode: {0}")]
    UnsupportedMode(String),

    #[error("graph too large for exhaustive enumeration: {edges} edges (limit {limit})")]
    TooLarge { edges: usize, limit: usize },

    #[error("statistic kinds differ: {0} vs {1}")]
    KindMismatch(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
