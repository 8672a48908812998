use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid landmark set: {0}")]
    InvalidLandmarks(String),

    #[error("degenerate alignment anchors: {0}")]
    DegenerateAnchors(String),

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("rank deficient system: {0}")]
    RankDeficient(String),

    #[error("degenerate clustering: {0}")]
    DegenerateClusters(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid projection: {0}")]
    InvalidProjection(String),

    #[error("point behind camera (homogeneous w = {w:e})")]
    BehindCamera { w: f64 },

    #[error("deformation diverged at iteration {iteration}: energy rose for {window} consecutive iterations (energy {energy:e})")]
    Diverged {
        iteration: usize,
        window: usize,
        energy: f64,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("invalid configuration ({} violation(s)): {}", .0.len(), .0.join("; "))]
    Config(Vec<String>),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidLandmarks(_) => "invalid-landmarks",
            Error::DegenerateAnchors(_) => "degenerate-anchors",
            Error::TooFewSamples { .. } => "too-few-samples",
            Error::RankDeficient(_) => "rank-deficient",
            Error::DegenerateClusters(_) => "degenerate-clusters",
            Error::Shape(_) => "shape-mismatch",
            Error::NonScalarLoss(_) => "non-scalar-loss",
            Error::MissingGradient(_) => "missing-gradient",
            Error::UnknownParameter(_) => "unknown-parameter",
            Error::InvalidMesh(_) => "invalid-mesh",
            Error::InvalidProjection(_) => "invalid-projection",
            Error::BehindCamera { .. } => "behind-camera",
            Error::Diverged { .. } => "diverged",
            Error::NonFinite(_) => "non-finite",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
        }
    }

    /// Individual violations for configuration errors, otherwise the message.
    pub fn violations(&self) -> Vec<String> {
        match self {
            Error::Config(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}
