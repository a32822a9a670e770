use thiserror::Error;

#[derive(Debug, Error)]
pub enum GirpError {
    #[error("no observations supplied")]
    Empty,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("response out of range for {loss}: {value}")]
    ResponseOutOfRange { loss: String, value: f64 },

    #[error("fit value {value} outside the domain of {loss}")]
    OutsideDomain { loss: String, value: f64 },

    #[error("invalid loss specification: {0}")]
    InvalidLoss(String),

    #[error("infinite-capacity arc incident to the source or sink ({from} -> {to})")]
    InfiniteTerminalArc { from: usize, to: usize },

    #[error("malformed flow network: {0}")]
    MalformedNetwork(String),

    #[error("instance too large for exhaustive solver: n = {n}, limit = {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("iteration {k} not in path (last iteration is {last})")]
    UnknownIteration { k: usize, last: usize },

    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GirpError>;
