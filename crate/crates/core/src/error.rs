use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("point at row {row} lies outside the domain (dimension {dim}, value {value})")]
    Domain { row: usize, dim: usize, value: f64 },

    #[error("labels are not categorical: {0}")]
    NotCategorical(String),

    #[error("finite-difference backend supports |k| <= 2, got |k| = {order}; provide analytic partials")]
    UnsupportedOrder { order: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("covariance of component {component} collapsed despite regularization")]
    CovarianceCollapse { component: usize },

    #[error(
        "only {accepted} of {requested} points accepted after {draws} draws (acceptance rate {rate:.3e})"
    )]
    LowAcceptance {
        requested: usize,
        accepted: usize,
        draws: usize,
        rate: f64,
    },

    #[error("flat function: all sensitivities are zero; enable the lenient flag to fall back to uniform sampling")]
    FlatFunction,

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    #[error("solution blew up at step {step}")]
    BlowUp { step: usize },

    #[error("pole crossed inside [0, {t}]")]
    Singularity { t: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::CovarianceCollapse { .. }
                | Error::LowAcceptance { .. }
                | Error::FlatFunction
                | Error::Divergence { .. }
                | Error::BlowUp { .. }
                | Error::Singularity { .. }
        )
    }
}
