use std::path::PathBuf;

use thiserror::Error;

use crate::device_model::FerroKernelParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside the normalized conductance range [0, 1]")]
    Domain { value: f64 },

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("fit did not converge for {polarity} after {iterations} iterations (best rms {rms:.3e})")]
    FitNotConverged {
        polarity: &'static str,
        iterations: usize,
        rms: f64,
        best: FerroKernelParams,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient in {layer}")]
    NonFiniteGradient { layer: String },

    #[error("noise scale undefined: tensor has no non-zero levels")]
    NoiseScale,

    #[error("EDF parse error at byte {offset}: {message}")]
    Edf { offset: usize, message: String },

    #[error("log parse error at line {line}: {message}")]
    LogParse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("signal too short for filtering: {len} samples, need more than {needed}")]
    FilterWarmup { len: usize, needed: usize },

    #[error("container error: {0}")]
    Container(String),

    #[error("runtime assertion failed: {0}")]
    Assertion(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context: context.into(),
            expected,
            actual,
        }
    }
}
