use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("unbalanced tracked-edit markers at byte {offset}: {detail}")]
    UnbalancedMarkers { offset: usize, detail: String },

    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("provider error: {0}")]
    ProviderError(String),

    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("embedding model mismatch: store uses {expected:?}, got {actual:?}")]
    ModelMismatch { expected: String, actual: String },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("vector store is empty")]
    EmptyStore,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient demonstrations: need {needed}, found {available}")]
    InsufficientDemonstrations { needed: usize, available: usize },

    #[error("malformed LLM output: {0}")]
    MalformedLlmOutput(String),

    #[error("all {0} sampled candidates were malformed")]
    AllCandidatesMalformed(usize),

    #[error("unknown gold id {0:?}")]
    UnknownGoldId(String),

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("too few vectors: need at least 2, got {0}")]
    TooFewVectors(usize),

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("input set is empty")]
    EmptySet,

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedDocument(_) => "MalformedDocument",
            Error::UnbalancedMarkers { .. } => "UnbalancedMarkers",
            Error::ProviderUnavailable(_) => "ProviderUnavailable",
            Error::ProviderError(_) => "ProviderError",
            Error::ScorerUnavailable(_) => "ScorerUnavailable",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::ModelMismatch { .. } => "ModelMismatch",
            Error::ZeroVector => "ZeroVector",
            Error::EmptyStore => "EmptyStore",
            Error::InsufficientData(_) => "InsufficientData",
            Error::InsufficientDemonstrations { .. } => "InsufficientDemonstrations",
            Error::MalformedLlmOutput(_) => "MalformedLLMOutput",
            Error::AllCandidatesMalformed(_) => "AllCandidatesMalformed",
            Error::UnknownGoldId(_) => "UnknownGoldId",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::TooFewVectors(_) => "TooFewVectors",
            Error::EmptyTestSet => "EmptyTestSet",
            Error::EmptySet => "EmptySet",
            Error::DuplicateId(_) => "DuplicateId",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// Errors caused by bad caller input rather than runtime conditions.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedDocument(_)
                | Error::UnbalancedMarkers { .. }
                | Error::DimMismatch { .. }
                | Error::ModelMismatch { .. }
                | Error::DuplicateId(_)
                | Error::InvalidInput(_)
                | Error::Json(_)
        )
    }
}
