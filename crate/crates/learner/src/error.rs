/// Errors from network construction, gradient computation, training, and
/// checkpoint IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("network config invalid: {0}")]
    InvalidConfig(String),

    #[error("state length {got} does not match the configured input size {want}")]
    BadStateLength { want: usize, got: usize },

    #[error("throughput window length {got}, expected {want}")]
    BadWindowLength { want: usize, got: usize },

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("shape mismatch for `{name}`: got {got:?}, want {want:?}")]
    ShapeMismatch { name: String, got: Vec<usize>, want: Vec<usize> },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("action index {got} out of range ({len} actions)")]
    BadAction { got: usize, len: usize },

    #[error("probabilities are degenerate (NaN or zero mass)")]
    DegenerateDistribution,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at update {update}: {what}")]
    Diverged { update: usize, what: String },

    #[error(transparent)]
    Core(#[from] abr_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
