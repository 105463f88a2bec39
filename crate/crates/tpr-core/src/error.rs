//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("backend unreachable after retries: {details}")]
    BackendUnreachable { details: String },

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("backend rejected image input")]
    ImageUnsupported,

    #[error("backend did not return token probabilities")]
    LogprobsUnavailable,

    #[error("no fixture entry for request (kind {kind}, hash {hash})")]
    FixtureMiss { kind: String, hash: String },

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("backend returned an empty vision-token list")]
    EmptyTokenList,

    #[error("backend returned an empty response")]
    EmptyResponse,

    #[error("parse failure: {0}")]
    ParseFailure(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("missing score for unit {unit_id}")]
    MissingScore { unit_id: String },

    #[error("missing scored topic {topic_id}")]
    MissingTopicScore { topic_id: String },

    #[error("stage {stage} requires {missing} to be complete")]
    StageDependencyUnmet { stage: String, missing: String },

    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config digest mismatch: run has {expected}, supplied config digests to {got}")]
    ConfigMismatch { expected: String, got: String },

    #[error("unknown run {run_id}")]
    UnknownRun { run_id: String },

    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),

    #[error("malformed pairs file: {0}")]
    MalformedPairsFile(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no pairs to fit")]
    NoPairs,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("backend role {role} cannot serve {operation}")]
    RoleMismatch { role: String, operation: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Transport-level failures are worth retrying; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::BackendUnreachable { .. })
    }

    /// True for errors that indicate the backend itself failed (used for
    /// exit-code classification, not for control flow).
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            Error::BackendUnreachable { .. }
                | Error::MalformedResponse(_)
                | Error::LogprobsUnavailable
                | Error::ImageUnsupported
        )
    }
}
