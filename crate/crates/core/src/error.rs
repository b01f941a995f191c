use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("requested {k} eigenpairs but the problem has dimension {dim}")]
    KTooLarge { k: usize, dim: usize },
    #[error("eigensolver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("row {row} has (near) zero norm")]
    ZeroVector { row: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("class {class} has no labelled instance")]
    EmptyClass { class: usize },
    #[error("mean of class {class} vanishes in the subspace")]
    DegenerateClassMean { class: usize },
    #[error("labelled target class {class} is absent from the source label set")]
    UnknownClassInTargetTrain { class: usize },
    #[error("class {class} has {count} instances, at least 2 are required")]
    InsufficientClassSize { class: usize, count: usize },
    #[error("class {class} has no test rows")]
    EmptyTestClass { class: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("row count mismatch: {features} feature rows vs {labels} labels")]
    RowCountMismatch { features: usize, labels: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl Error {
    /// True for numerical failures (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NonConvergence { .. }
                | Error::ZeroVector { .. }
                | Error::DegenerateData(_)
                | Error::DegenerateClassMean { .. }
                | Error::KTooLarge { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
