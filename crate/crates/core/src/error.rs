use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}{}", scope_suffix(.scope))]
    NonFinite { op: &'static str, scope: Option<String> },

    #[error("non-finite loss term `{term}`")]
    NonFiniteLoss { term: String },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("domain dataset `{0}` is empty")]
    EmptyDomain(String),

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    CheckpointChecksum { stored: u64, computed: u64 },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("not a checkpoint file (bad magic bytes)")]
    CheckpointMagic,

    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn scope_suffix(scope: &Option<String>) -> String {
    match scope {
        Some(s) => format!(" (in `{s}`)"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
