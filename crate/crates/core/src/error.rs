use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape([usize; 4]),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("channel mismatch: operator expects {expected} input channels, tensor has {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("weight entry {index}: expected tensor `{expected}`, container has `{found}`")]
    WeightNameMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("weight tensor `{name}`: expected shape {expected:?}, container has {found:?}")]
    WeightShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("weight payload holds {found} floats, manifest requires {expected}")]
    WeightLength { expected: usize, found: usize },

    #[error("schedule is not a topological order: {0}")]
    NotTopological(String),

    #[error("invalid compute graph: {0}")]
    InvalidGraph(String),

    #[error("graph has {ops} ops, exact search is limited to {limit}")]
    GraphTooLarge { ops: usize, limit: usize },

    #[error("graph has non-trivial parallel structure: {0}")]
    NonTrivialParallelism(String),

    #[error("split into {split} groups exceeds the {channels} expanded channels")]
    SplitTooLarge { split: usize, channels: usize },

    #[error("ReLU output is not invertible: {0}")]
    NotInvertible(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
