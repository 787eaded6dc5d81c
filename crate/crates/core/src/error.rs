use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum PcnnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular linear system ({0})")]
    Singular(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    NonFiniteLoss { epoch: usize },

    #[error("training subpattern {part} failed: {source}")]
    SubpatternFailed {
        part: usize,
        #[source]
        source: Box<PcnnError>,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PcnnError>;

impl PcnnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PcnnError::Io {
            path: path.into(),
            source,
        }
    }
}

impl PcnnError {
    /// Coarse category used for exit codes and machine-readable messages.
    pub fn category(&self) -> &'static str {
        match self {
            PcnnError::InvalidArgument(_) => "config",
            PcnnError::Io { .. } => "io",
            PcnnError::Csv(e) if e.is_io_error() => "io",
            PcnnError::DimensionMismatch(_)
            | PcnnError::EmptyDataset
            | PcnnError::DegenerateData(_)
            | PcnnError::MissingColumn(_)
            | PcnnError::BadCell { .. }
            | PcnnError::Format(_)
            | PcnnError::Csv(_) => "data",
            PcnnError::NonFinite(_)
            | PcnnError::Singular(_)
            | PcnnError::NonFiniteLoss { .. }
            | PcnnError::SubpatternFailed { .. }
            | PcnnError::UndefinedMetric(_) => "numerical",
        }
    }
}
