use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("system `{0}` has no affine decomposition in its parameters")]
    NotAffine(String),

    #[error("state blew up after t = {last_valid_time}")]
    BlowUp { last_valid_time: f64 },

    #[error("series too short: need more than {needed} samples, have {available}")]
    InsufficientLength { needed: usize, available: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("parameters not identifiable: Gram condition number {condition:e}")]
    NonIdentifiable { condition: f64 },

    #[error("training diverged at epoch {epoch} (lr = {lr})")]
    Divergence { epoch: usize, lr: f64 },

    #[error("R² undefined: true values are constant")]
    UndefinedRSquared,

    #[error("{path}: {kind}")]
    Format { path: PathBuf, kind: FormatError },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes (expected {expected:?})")]
    BadMagic { expected: String },
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("file truncated: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Error::Format { path: path.into(), kind }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }

    /// The innermost error, looking through stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
