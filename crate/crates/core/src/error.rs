use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix of {rows}x{cols} exceeds the supported size")]
    TooLarge { rows: usize, cols: usize },

    #[error("log-sum-exp of an empty slice")]
    EmptyInput,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least two templates")]
    TooFewTemplates,

    #[error("incomplete template grid: no raster for template {template:?}, font {font:?}")]
    IncompleteGrid { template: String, font: String },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("index {index} out of range for {len} templates")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate similarity: directional matrix for template {0} is all zero")]
    DegenerateSimilarity(usize),

    #[error("degenerate self-affinity for template {0}")]
    DegenerateSelfAffinity(usize),

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("unknown {kind} {name:?}; expected one of {known}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("non-finite loss at iteration {iteration} (alpha {alpha}, max |cos| {max_abs_cosine})")]
    NonFiniteLoss {
        iteration: usize,
        alpha: f64,
        max_abs_cosine: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem or malformed input files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Decode { .. } | Error::Format { .. } | Error::Manifest { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
