use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scale {0}: must be finite and positive")]
    InvalidScale(f64),

    #[error("unsupported fixed-point format Q{m}.{n} for a {width}-bit {context}")]
    UnsupportedFormat {
        m: u32,
        n: u32,
        width: u32,
        context: &'static str,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value observed in tensor `{0}`")]
    NonFinite(String),

    #[error("no statistics collected: calibration dataset is empty")]
    EmptyDataset,

    #[error("missing calibration statistics for tensor `{0}`")]
    MissingStats(String),

    #[error("unexpected statistics for tensor `{0}` (model variant does not use it)")]
    UnexpectedStats(String),

    #[error("cell state range {max_abs} needs more than 6 integer bits")]
    CellRangeTooLarge { max_abs: f64 },

    #[error("zero-point fold overflows int32 in row {row}")]
    FoldOverflow { row: usize },

    #[error("accumulation depth {depth} exceeds the safe int8 x int8 -> int32 depth of 32768")]
    UnsafeAccumulationDepth { depth: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            actual,
        }
    }
}
