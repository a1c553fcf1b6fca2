use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("batch row {index}: expected input length {expected}, got {actual}")]
    BatchRow {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cost evaluation for particle {particle} returned non-finite value {value}")]
    NonFiniteCost { particle: usize, value: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing column {0}")]
    MissingColumn(&'static str),

    #[error("row {row}, column {column}: {value:?} is not a finite number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} fields, got {actual}")]
    RaggedRow {
        row: usize,
        expected: usize,
        actual: usize,
    },

    #[error("column {0} is constant; cannot normalize")]
    ConstantColumn(&'static str),

    #[error("train fraction {fraction} leaves an empty side for {n} rows")]
    EmptySplit { fraction: f64, n: usize },

    #[error("model {label:?} failed: {source}")]
    ModelFailed {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::BatchRow { .. } => "batch_row",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NonFiniteCost { .. } => "non_finite_cost",
            Error::Divergence { .. } => "divergence",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::EmptyDataset => "empty_dataset",
            Error::MissingColumn(_) => "missing_column",
            Error::ParseCell { .. } => "parse_cell",
            Error::RaggedRow { .. } => "ragged_row",
            Error::ConstantColumn(_) => "constant_column",
            Error::EmptySplit { .. } => "empty_split",
            Error::ModelFailed { .. } => "model_failed",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
