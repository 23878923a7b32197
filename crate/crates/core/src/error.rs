use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedError {
    #[error("shape mismatch at layer {layer}: {left:?} vs {right:?}")]
    ShapeMismatch {
        layer: usize,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("layer count mismatch: expected {expected}, got {got}")]
    LayerCountMismatch { expected: usize, got: usize },

    #[error("cannot average an empty list")]
    EmptyAverage,

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("subspace rank {rank} exceeds row dimension {rows} at layer {layer}")]
    RankExceedsRows { layer: usize, rank: usize, rows: usize },

    #[error("orthogonalization degenerate after {retries} retries at layer {layer}")]
    DegenerateProjection { layer: usize, retries: usize },

    #[error("client index {client} out of range (n = {n})")]
    ClientOutOfRange { client: usize, n: usize },

    #[error("batch size {batch} out of range for client with {samples} samples")]
    BatchOutOfRange { batch: usize, samples: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("Newton solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NewtonNonConvergence { iterations: usize, grad_norm: f64 },

    #[error("non-finite iterate at round {round}, local step {step}")]
    Divergence { round: usize, step: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FedError {
    fn from(e: std::io::Error) -> Self {
        FedError::Io(e.to_string())
    }
}

impl From<csv::Error> for FedError {
    fn from(e: csv::Error) -> Self {
        FedError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FedError>;
