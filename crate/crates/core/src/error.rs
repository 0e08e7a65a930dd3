use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at frame {frame}, dim {dim}")]
    NonFinite { frame: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("degenerate variance in dimension {0}")]
    DegenerateVariance(usize),

    #[error("document {doc} references missing utterance {utterance}")]
    MissingUtterance { doc: String, utterance: String },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("degenerate seed segment: length {0} < 2 frames")]
    DegenerateSeed(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite likelihood: {0}")]
    NonFiniteLikelihood(String),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
