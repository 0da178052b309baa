use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image of {width}x{height} is smaller than the 8x8 patch size")]
    DimensionTooSmall { width: usize, height: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{} pixel(s) not covered by any patch, first at {:?}", .0.len(), .0.first())]
    UncoveredPixels(Vec<(usize, usize)>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("component {component} degenerated (responsibility mass {mass:.3e})")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("EM objective decreased at iteration {iter}: {previous} -> {current}")]
    NonMonotone { iter: usize, previous: f64, current: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model file format error: {0}")]
    Format(String),

    #[error("unsupported model file version {found:?}")]
    VersionMismatch { found: String },

    #[error("model file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("model file truncated")]
    Truncated,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("scene {scene}: {reason}")]
    Dataset { scene: String, reason: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
