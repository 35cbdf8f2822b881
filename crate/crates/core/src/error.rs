use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: record {record}: {message}")]
    MalformedRecord {
        path: PathBuf,
        record: usize,
        message: String,
    },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("invalid dictionary: {0}")]
    Dictionary(String),

    #[error("invalid pattern set: {0}")]
    Patterns(String),

    #[error("empty document")]
    EmptyDocument,

    #[error("empty documents: {}", .0.join(", "))]
    EmptyDocuments(Vec<String>),

    #[error("term not in corpus: {0}")]
    TermNotInCorpus(String),

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("matrix has no nonzero entries")]
    ZeroMatrix,

    #[error("SVD did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("zero-variance embedding row for document {0}")]
    ZeroVariance(String),

    #[error("need at least {needed} {what}, got {got}")]
    TooSmall {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("node {node} out of range for graph of size {size}")]
    NodeOutOfRange { node: usize, size: usize },

    #[error("objective undefined on trivial split")]
    TrivialSplit,

    #[error("communities must be disjoint")]
    OverlappingCommunities,

    #[error("unknown member id {0}")]
    UnknownId(String),

    #[error("id sets differ: {}", .0.join(", "))]
    IdMismatch(Vec<String>),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("missing artifact {artifact}: run stage {stage} first")]
    MissingArtifact { stage: String, artifact: PathBuf },

    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Unwraps stage context to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 missing dependency,
    /// 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config { .. } | Error::Dictionary(_) | Error::Patterns(_) => 2,
            Error::MissingArtifact { .. } => 3,
            Error::NoConvergence { .. }
            | Error::ZeroVariance(_)
            | Error::ZeroMatrix
            | Error::RankOutOfRange { .. } => 4,
            _ => 1,
        }
    }
}
