use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("shape mismatch: expected {expected}, got {actual} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("relaxation diverged after {steps} steps (|u| = {magnitude})")]
    Instability { steps: usize, magnitude: f64 },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("bad magic number in {path}: expected {expected}, found {found}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
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

    /// Short category label used by the CLI when reporting failures.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::Parse(_)
            | Error::Checkpoint(_) => "parse",
            Error::Shape { .. } => "shape",
            Error::NumericFault(_) | Error::Instability { .. } | Error::DivisionByZero(_) => {
                "numeric"
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
