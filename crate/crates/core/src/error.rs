use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::Task;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- configuration ----
    #[error("config invalid at `{path}`: {reason}")]
    ConfigInvalid { path: String, reason: String },
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("invalid normalization config: {0}")]
    InvalidNormConfig(String),
    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),

    // ---- data ----
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("row {row}: unknown class `{label}` for task {task}")]
    UnknownClass {
        row: usize,
        task: Task,
        label: String,
    },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("empty document id at row {0}")]
    EmptyId(usize),
    #[error("datasets `{left}` and `{right}` use different label hierarchies")]
    HierarchyMismatch { left: String, right: String },
    #[error("document `{id}` has no label for task {task}")]
    Unlabeled { id: String, task: Task },
    #[error("task {0} is not binary")]
    NotBinary(Task),
    #[error("cannot balance: {protected} protected rows exceed the target majority size {target}")]
    CannotBalance { protected: usize, target: usize },
    #[error("class `{class}` has {count} documents, need at least 2")]
    DegenerateClass { class: String, count: usize },
    #[error("no labeled documents for task {0}")]
    EmptyTask(Task),
    #[error("no documents of positive class `{0}`")]
    NoPositives(String),
    #[error("unknown class `{0}`")]
    UnknownLabel(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty vocabulary: min_df = {min_df} excludes every token")]
    EmptyVocabulary { min_df: usize },
    #[error("embedding rows have different dimensions ({expected} vs {found} for `{id}`)")]
    RaggedDimensions {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding for `{0}` has zero norm")]
    ZeroNormVector(String),
    #[error("duplicate embedding key `{0}`")]
    DuplicateKey(String),
    #[error("no embedding for document `{0}`")]
    MissingEmbedding(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` does not match the ensemble's label space ({reason})")]
    TaskMismatch { model: String, reason: String },
    #[error("featurizer fingerprint mismatch: model expects {expected}, got {found}")]
    FeaturizerMismatch { expected: String, found: String },
    #[error("{0} candidates exceed the exhaustive-search limit of 16")]
    TooManyCandidates(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("precondition violated: {0}")]
    Precondition(String),

    // ---- numeric ----
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("{0}")]
    WeightCountMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss {loss} cannot be used with {classes} classes")]
    SpecTaskMismatch { loss: String, classes: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),

    // ---- io ----
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::ConfigInvalid { .. }
            | Error::InvalidHierarchy(_)
            | Error::InvalidNormConfig(_)
            | Error::InvalidSpec(_) => 2,
            Error::DimensionMismatch { .. }
            | Error::ZeroNorm
            | Error::WeightCountMismatch(_)
            | Error::ShapeMismatch(_)
            | Error::SpecTaskMismatch { .. }
            | Error::NonFinite(_) => 4,
            _ => 3,
        }
    }
}
