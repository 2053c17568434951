use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input dimension mismatch at layer {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("parameter vector has length {got}, model needs {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample {index} has label {label}, valid range is 0..{num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("prior fit needs at least 2 posterior rows, got {got}")]
    InsufficientSamples { got: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("chain diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty shard")]
    EmptyShard,

    #[error("batch size {batch_size} exceeds shard size {shard_size}")]
    BatchTooLarge {
        batch_size: usize,
        shard_size: usize,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("aggregation weights sum to zero")]
    ZeroWeightSum,

    #[error("predictive average size {requested} out of range 1..={available}")]
    AvgSizeOutOfRange { requested: usize, available: usize },

    #[error("pool of {available} samples cannot supply {needed}")]
    InsufficientPool { needed: usize, available: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("corrupt artifact {path}: {msg}")]
    CorruptArtifact { path: String, msg: String },

    #[error("{msg}: {source}")]
    Context {
        msg: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_node(self, node: usize) -> Error {
        Error::Node {
            node,
            source: Box::new(self),
        }
    }

    /// True if this error (or any wrapped source) is a chain divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::NonFiniteGradient => true,
            Error::Node { source, .. } | Error::Context { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
