//! Error types shared across the toolkit.

use thiserror::Error;

/// Unified error type for tensor, transform, layer, data, and training failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Array extents do not line up (matmul inner dims, batch shapes, ...).
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A value-level contract was violated (non-scalar loss, wrong dtype, ...).
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// Invalid model / training / CLI configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Unknown activation or other enumerated option.
    #[error("unknown option for {what}: {value} (valid: {valid})")]
    UnknownOption {
        what: &'static str,
        value: String,
        valid: &'static str,
    },

    /// A forward op produced NaN/Inf from finite inputs.
    #[error("non-finite output in {op}: {detail}")]
    NonFinite { op: &'static str, detail: String },

    /// A trainable pole collided with an excitation frequency (or query point).
    #[error(
        "pole collision in {op}: |s - mu| < {tol:e} for pole (c_in={c_in}, c_out={c_out}, n={n})"
    )]
    PoleCollision {
        op: &'static str,
        c_in: usize,
        c_out: usize,
        n: usize,
        tol: f64,
    },

    /// Relative-L2 target has zero norm.
    #[error("degenerate target: zero norm in relative L2 for sample {sample}")]
    DegenerateTarget { sample: usize },

    /// Adaptive ODE integration could not proceed.
    #[error("integration failure at t = {t}: {detail}")]
    Integration { t: f64, detail: String },

    /// Dataset / checkpoint container violations.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A training trial aborted (non-finite loss or gradients).
    #[error("training aborted at epoch {epoch}: {detail}")]
    TrainingAborted { epoch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
