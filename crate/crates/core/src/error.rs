use thiserror::Error;

use crate::kernel::KernelFamily;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructor received parameters that violate a type invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The kernel has no second derivative at the origin, so the zero
    /// intensity is infinite.
    #[error("kernel {0:?} is not twice differentiable at zero")]
    NotTwiceDifferentiable(KernelFamily),

    /// Cholesky kept failing up to the jitter cap.
    #[error("cholesky failed with jitter up to {max_jitter:e}")]
    JitterExceeded { max_jitter: f64 },

    /// A caller asked for something inconsistent, e.g. more modes than nodes.
    #[error("argument error: {0}")]
    Argument(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: estimate {estimate}, error bound {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    /// The warping has not passed monotonicity validation.
    #[error("warping is not validated as strictly increasing")]
    NotValidated,

    /// Malformed input file with a 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
