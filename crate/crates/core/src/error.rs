use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite coordinate at point {point}, dimension {dim}")]
    NonFinite { point: usize, dim: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k too large: k = {k} but the cloud has only {n} points")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vertex {vertex} out of range for a graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("edge ({0}, {1}) is not in the graph")]
    EdgeNotFound(usize, usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("negative or non-finite edge length {length} on edge ({u}, {v})")]
    BadEdgeLength { u: usize, v: usize, length: f64 },
    #[error("disconnected neighborhood around edge ({0}, {1})")]
    DisconnectedNeighborhood(usize, usize),
    #[error("infeasible transportation problem: {0}")]
    Infeasible(String),
    #[error("cloud has no labels")]
    MissingLabels,
    #[error("label {label} at index {index} is not a binary class id")]
    NonBinaryLabel { index: usize, label: u8 },
    #[error("community {0} has zero volume")]
    ZeroVolume(u8),
    #[error("graph has no edges")]
    NoEdges,
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("unexpected IDX magic {0}")]
    BadMagic(u32),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("insufficient samples for class {class}: need {needed}, have {available}")]
    InsufficientSamples {
        class: u8,
        needed: usize,
        available: usize,
    },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
