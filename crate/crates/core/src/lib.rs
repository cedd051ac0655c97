//! Gaussian processes whose covariance is a stationary kernel evaluated on a
//! monotone time change: `K_θ(t, s) = K(|θ(t) − θ(s)|)`.
//!
//! - [`kernel`]: stationary families and their derivatives at zero.
//! - [`warp`]: monotone warpings, tabulated input and validation.
//! - [`modkernel`]: the modulated kernel, Gram matrices and jitter.
//! - [`spectral`]: Nyström eigensystems, transport and conjugation checks.
//! - [`pathsim`]: seeded path sampling and zero counting.
//! - [`zeros`]: expected zero counts, closed form against Monte Carlo.
//! - [`cli`]: the config-driven `validate`, `eigen` and `zeros` commands.
//!
//! ```
//! use modgp::kernel::KernelSpec;
//! use modgp::warp::Warping;
//! use modgp::modkernel::evaluate_modulated;
//!
//! let k = KernelSpec::squared_exponential(1.0, 1.0)?;
//! let w = Warping::affine(2.0, 0.0, 0.0, 10.0)?;
//! let v = evaluate_modulated(&k, &w, 0.5, 0.0)?;
//! assert!((v - (-0.5f64).exp()).abs() < 1e-15);
//! # Ok::<(), modgp::Error>(())
//! ```

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod kernel;
pub mod modkernel;
pub mod pathsim;
pub mod quadrature;
pub mod spectral;
pub mod warp;
pub mod zeros;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/warpings.md")]
    mod warpings {}
    #[doc = include_str!("../../../book/src/modulated-kernel.md")]
    mod modulated_kernel {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/zero-counts.md")]
    mod zero_counts {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
