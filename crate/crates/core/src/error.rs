use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown stage token `{0}` (expected one of RE, LD, S, F, BD, BO)")]
    UnknownStage(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("field {field_id}: feature `{feature}` needs raw variable(s) that are not present")]
    MissingVariable { field_id: String, feature: String },

    #[error("feature mismatch: model expects [{expected}], input provides [{found}]")]
    FeatureMismatch { expected: String, found: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value in input at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("fuzzy c-means did not converge within {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("combinatorial budget exceeded: {count} feature sets requested, limit is {limit}")]
    BudgetExceeded { count: u128, limit: u128 },

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
