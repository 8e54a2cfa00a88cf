use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("tensor shape {shape:?} does not match {len} data entries")]
    BadShape { shape: Vec<usize>, len: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("loss node must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate batch id {0}")]
    DuplicateId(usize),

    #[error("batch id {id} out of range for table of size {size}")]
    IdOutOfRange { id: usize, size: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("dataset error at row {row}, column {column}: {message}")]
    DatasetCell {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::BadShape { .. } => "shape",
            Error::NonFinite { .. } | Error::NonFiniteGradient { .. } => "non_finite",
            Error::NonScalarLoss { .. } | Error::UnknownNode(_) => "tape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DuplicateId(_) | Error::IdOutOfRange { .. } => "batch_ids",
            Error::Diverged { .. } => "diverged",
            Error::DatasetCell { .. } | Error::Dataset(_) | Error::Csv(_) => "dataset",
            Error::Checkpoint(_) | Error::CheckpointVersion { .. } => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
