use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tensor extents must all be >= 1, got {0:?}")]
    BadExtent(Vec<usize>),
    #[error("expected {expected} values for the given shape, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("cannot average an empty collection")]
    EmptyCollection,

    #[error("invalid network graph: {0}")]
    Graph(String),
    #[error("weight collection does not match the network: {0}")]
    WeightMismatch(String),
    #[error("batch does not match the network input: {0}")]
    BatchMismatch(String),
    #[error("no {0} data attached to the network")]
    NoData(&'static str),
    #[error("could not parse layer spec: {0}")]
    LayerSyntax(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("cannot split {n} examples across {k} workers")]
    TooManyShards { n: usize, k: usize },
    #[error("batch size {b} exceeds shard size {size}")]
    BatchTooLarge { b: usize, size: usize },

    #[error("invalid scheme parameters: {0}")]
    Scheme(String),
    #[error("serial baseline never reached target accuracy {target} within {budget} iterations")]
    BaselineUnreached { target: f64, budget: u64 },
}
