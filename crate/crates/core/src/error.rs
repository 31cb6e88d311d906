use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("not enough samples: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected} input features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss is not finite); try a smaller learning rate")]
    Diverged { epoch: usize },

    #[error("model file is corrupt: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("feature `{0}` is categorical; response curves need a numeric active feature")]
    CategoricalActive(String),

    #[error("active feature `{0}` is constant over the observed data")]
    ConstantActive(String),

    #[error("curve has {found} grid points but the model expects {expected}")]
    GridMismatch { expected: usize, found: usize },

    #[error("score vectors differ in length ({0} vs {1})")]
    ScoreLengthMismatch(usize, usize),

    #[error("Pareto front is empty")]
    EmptyFront,

    #[error("fold reports disagree: {0}")]
    FoldMismatch(String),

    #[error("no local explanations to aggregate")]
    NoExplanations,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
