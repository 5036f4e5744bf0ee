use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {dim} is {got}, expected {expected}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid argument to {op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("power normalization of an all-zero feature vector")]
    ZeroNorm,
    #[error("odd element count {0} cannot be paired into complex symbols")]
    OddElementCount(usize),
    #[error("value {node} was not recorded on this tape")]
    Unrecorded { node: usize },
    #[error("architecture error: {0}")]
    Architecture(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("pixel value {value} outside [{lo}, {hi}]")]
    PixelRange { value: f64, lo: f64, hi: f64 },
    #[error("PPM decode error: {0}")]
    Ppm(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
