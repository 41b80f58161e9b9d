use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("tool catalog is empty")]
    EmptyCatalog,
    #[error("tool catalog has {0} tools; at most {max} are supported", max = crate::model::MAX_TOOLS)]
    CatalogTooLarge(usize),
    #[error("tool name must not be empty")]
    EmptyToolName,
    #[error("tool `{0}` appears more than once in the catalog")]
    DuplicateTool(String),
    #[error("tool `{tool}` declares parameter `{param}` more than once")]
    DuplicateParameter { tool: String, param: String },

    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool `{0}` named more than once")]
    DuplicateName(String),
    #[error("coalition was built against a different tool catalog")]
    FingerprintMismatch,
    #[error("coalition mask {mask:#x} uses bits beyond the {n} catalog tools")]
    MaskOutOfRange { mask: u32, n: usize },
    #[error("prompt `{prompt}` expects tool `{tool}`, which is not in the catalog")]
    UnknownExpectedTool { prompt: String, tool: String },

    #[error("rho must lie in (0, 1], got {0}")]
    InvalidRho(f64),
    #[error("permutation count must be at least 1")]
    InvalidPermutations,
    #[error("value table is missing {missing} of {total} coalitions")]
    IncompleteTable { missing: usize, total: usize },

    #[error("agent unavailable: {0}")]
    AgentUnavailable(String),
    #[error("agent did not produce a final answer within {0} turns")]
    MaxTurnsExceeded(usize),
    #[error("invalid agent script: {0}")]
    InvalidScript(String),

    #[error("embedding backend unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("embedding dimension mismatch: cached {cached}, live {live}")]
    DimensionMismatch { cached: usize, live: usize },
    #[error("embedding backend selected but no embedding configuration given")]
    MissingEmbeddingConfig,

    #[error("evaluation of coalition {{{coalition}}} failed: {source}")]
    EvaluationFailed {
        coalition: String,
        #[source]
        source: Box<Error>,
    },

    #[error("vector has no nonzero entries")]
    ZeroVector,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("experiment `{0}` needs {1}")]
    ExperimentSetup(&'static str, String),

    #[error("cache persistence failed: {0}")]
    CacheIo(String),
    #[error("{what} not found: {}", path.display())]
    MissingPath { what: &'static str, path: PathBuf },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure came from an unreachable agent or embedding
    /// service rather than from bad input.
    pub fn is_unavailable(&self) -> bool {
        match self {
            Error::AgentUnavailable(_)
            | Error::MaxTurnsExceeded(_)
            | Error::EmbeddingUnavailable(_) => true,
            Error::EvaluationFailed { source, .. } => source.is_unavailable(),
            _ => false,
        }
    }
}
