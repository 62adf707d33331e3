use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} is not aligned with the grid (spacing {h})")]
    Alignment { t: f64, h: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported Besov index (s={s}, p={p}, q={q}): {reason}")]
    UnsupportedIndex { s: f64, p: f64, q: f64, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value while evaluating operator at node {node}")]
    Evaluation { node: usize },

    #[error("kernel evaluation failed at (s={s}, t={t})")]
    Kernel { s: f64, t: f64 },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("{0}")]
    Config(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
