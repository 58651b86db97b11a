use std::path::PathBuf;

/// Errors surfaced by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("flow format error at byte offset {offset}: {reason}")]
    FlowFormat { offset: u64, reason: String },

    #[error("fixed-point inversion failed at {failed} of {total} samples")]
    InverseMapping {
        failed: usize,
        total: usize,
        /// Per-pixel count of non-converged supersamples, row-major.
        diagnostic: Vec<u32>,
    },

    #[error("subset centred at ({x}, {y}) does not fit inside the frame")]
    Placement { x: f64, y: f64 },

    #[error("correlation peak on the search border in band {band} (range ±{range})")]
    SearchRange { band: usize, range: i32 },

    #[error("threshold {threshold} never crossed by the bias curve")]
    OutOfRange { threshold: f64, curve: Vec<f64> },

    #[error("reference screening accepted {accepted} of {wanted} frames within {budget} candidates")]
    ScreeningBudget {
        accepted: usize,
        wanted: usize,
        budget: usize,
    },

    #[error("pair {index}: {source}")]
    Pair {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Codec(#[from] ::image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
