use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid up-interpolation target {target_h}x{target_w} for source {source_h}x{source_w}")]
    InvalidTarget {
        source_h: usize,
        source_w: usize,
        target_h: usize,
        target_w: usize,
    },

    #[error("non-finite attention score at ({row}, {col})")]
    NumericOverflow { row: usize, col: usize },

    #[error("refusing to materialize a {len}x{len} attention matrix (limit {limit})")]
    TooLargeToMaterialize { len: usize, limit: usize },

    #[error("no polynomial degree <= {g_max} reaches delta = {delta:e} for score bound b = {bound}")]
    RangeTooLarge { bound: f64, delta: f64, g_max: usize },

    #[error("approximate normalizer is not positive in row {row}")]
    NonPositiveRowSum { row: usize },

    #[error("need at least 3 points for a scaling fit, got {0}")]
    InsufficientData(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
