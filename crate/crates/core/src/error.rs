use thiserror::Error;

use crate::editor::ConflictReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("non-finite gradient at coordinate {0}")]
    NonFiniteGradient(usize),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("empty input")]
    EmptyInput,
    #[error("subject {subject:?} not found in prompt {prompt:?}")]
    SubjectNotFound { subject: String, prompt: String },
    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("position {position} out of range for sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("layer {layer} out of range 1..={n_layers}")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("prompt of {len} tokens exceeds max_seq {max_seq}")]
    PromptTooLong { len: usize, max_seq: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("degenerate data: zero variance")]
    DegenerateData,

    #[error("unknown noise variant {0:?}")]
    UnknownVariant(String),
    #[error("conflicting edit batch: {0}")]
    Conflict(ConflictReport),
    #[error("degenerate key: k^T C^-1 k = {0:e}")]
    DegenerateKey(f64),
    #[error("covariance is singular and no ridge was given")]
    SingularCovariance,
    #[error("normal equations are singular")]
    SingularSystem,

    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("text has {0} tokens, need at least 3")]
    TextTooShort(usize),
    #[error("reference text is empty")]
    EmptyReference,
    #[error("harmonic mean needs strictly positive inputs, got {0}")]
    NonPositiveInput(f64),
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("relation {0:?} needs at least 2 objects")]
    InsufficientPool(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation failures map to exit code 2 in the CLI.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Conflict(_) | Error::InvalidConfig(_) | Error::UnknownVariant(_) => true,
            Error::Pair { source, .. } | Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
