use std::path::PathBuf;
use thiserror::Error;

/// Errors raised by the PFM reader/writer. Kept as its own enum so callers
/// can distinguish header, truncation and endianness failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PfmError {
    #[error("malformed PFM header: {0}")]
    MalformedHeader(String),
    #[error("PFM payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("big-endian PFM data (positive scale) is not supported")]
    BigEndianUnsupported,
    #[error("PFM color images (`PF` magic) are not supported, only grayscale `Pf`")]
    ColorUnsupported,
}

/// Errors raised by the weights file reader/writer.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightsError {
    #[error("bad weights magic bytes")]
    BadMagic,
    #[error("weights file truncated in {0}")]
    Truncated(String),
    #[error("malformed weights header: {0}")]
    MalformedHeader(String),
    #[error("parameter blob size mismatch: header declares {declared} values, blob holds {actual}")]
    BlobSizeMismatch { declared: usize, actual: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for extent {extent} ({what})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        extent: usize,
    },

    #[error("iterative solver did not converge within {iters} iterations (residual {residual:.3e})")]
    SolverDidNotConverge { iters: usize, residual: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("training diverged at iteration {iter}: loss is not finite")]
    TrainingDiverged { iter: usize },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Pfm(#[from] PfmError),

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error("malformed {format} data: {detail}")]
    MalformedFile { format: &'static str, detail: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from bad user input or bad input files, as
    /// opposed to an internal numerical/logic failure. CLI exit codes key
    /// off this split.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::IndexOutOfRange { .. }
                | Error::Pfm(_)
                | Error::Weights(_)
                | Error::MalformedFile { .. }
                | Error::MissingArtifact(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Image(_)
                | Error::ShapeMismatch(_)
                | Error::EmptySelection(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
