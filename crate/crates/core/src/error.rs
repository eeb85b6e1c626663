use thiserror::Error;

use synthelite_chem::ChemError;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("missing template variable {0}")]
    MissingVar(String),
    #[error("tag <{0}> missing or unclosed")]
    TagMissing(String),
    #[error("malformed content in <{tag}>: {msg}")]
    Format { tag: String, msg: String },
    #[error("could not parse <{tag}> JSON: {msg}")]
    PlanParse { tag: String, msg: String },
    #[error("backend {backend} failed: {msg}")]
    Backend { backend: String, msg: String },
    #[error("no scripted rule matches the prompt (sha256 {0})")]
    NoScriptedMatch(String),
    #[error("scripted ledger {path}: {msg}")]
    Script { path: String, msg: String },
    #[error("score could not be parsed: {0}")]
    ScoreParse(String),
}

impl LlmError {
    /// Errors that a re-ask may fix, as opposed to transport failures.
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            LlmError::TagMissing(_) | LlmError::Format { .. } | LlmError::PlanParse { .. }
        )
    }
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("empty text cannot be embedded")]
    EmptyText,
    #[error("index has no searchable records")]
    EmptyIndex,
    #[error("embedding dimension {got} differs from {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("template record line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("index file {path}: {msg}")]
    Corrupt { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Chem(#[from] ChemError),
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("route schema: {0}")]
    Schema(String),
    #[error("benchmark has no cases")]
    EmptyBenchmark,
    #[error("no routes to score")]
    NoRoutes,
    #[error("checker: {0}")]
    Checker(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}
