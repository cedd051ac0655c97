//! Stationary covariance kernels `K(τ)` on the half line `τ ≥ 0`.
//!
//! Each family stores its curvature at the origin in closed form. That value
//! fixes the mean-square slope of the process and therefore its zero-crossing
//! rate, so it is never obtained by numerical differentiation here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `σ² exp(−τ²/2ℓ²)`
    SquaredExponential,
    /// Matérn ν = 3/2: `σ² (1 + √3 r) e^{−√3 r}`, `r = τ/ℓ`
    Matern32,
    /// Matérn ν = 5/2: `σ² (1 + √5 r + 5r²/3) e^{−√5 r}`
    Matern52,
    /// Matérn ν = 1/2 (exponential / Ornstein-Uhlenbeck): `σ² e^{−r}`
    Matern12,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::SquaredExponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::Matern12,
    ];

    /// Whether `K` has a finite second derivative at the origin.
    pub fn is_twice_differentiable(self) -> bool {
        !matches!(self, KernelFamily::Matern12)
    }
}

/// A stationary kernel family with its amplitude and length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    variance: f64,
    lengthscale: f64,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    variance: f64,
    lengthscale: f64,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.family, raw.variance, raw.lengthscale)
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, variance: f64, lengthscale: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variance must be finite and > 0, got {variance}"
            )));
        }
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lengthscale must be finite and > 0, got {lengthscale}"
            )));
        }
        Ok(Self {
            family,
            variance,
            lengthscale,
        })
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, variance, lengthscale)
    }

    pub fn matern32(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern32, variance, lengthscale)
    }

    pub fn matern52(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern52, variance, lengthscale)
    }

    pub fn matern12(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern12, variance, lengthscale)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// `K(0)`, the marginal variance of the process.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn is_twice_differentiable(&self) -> bool {
        self.family.is_twice_differentiable()
    }

    /// `K(τ)` for a lag `τ ≥ 0`.
    ///
    /// Callers pass `|t − s|`; negative lags are rejected rather than
    /// silently reflected.
    pub fn evaluate(&self, tau: f64) -> Result<f64> {
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("kernel lag must be >= 0, got {tau}")));
        }
        Ok(self.eval_unchecked(tau))
    }

    /// `K(τ)` without the sign check, for inner loops that already pass `|·|`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, tau: f64) -> f64 {
        let r = tau / self.lengthscale;
        let shape = match self.family {
            KernelFamily::SquaredExponential => (-0.5 * r * r).exp(),
            KernelFamily::Matern32 => {
                let x = 3f64.sqrt() * r;
                (1.0 + x) * (-x).exp()
            }
            KernelFamily::Matern52 => {
                let x = 5f64.sqrt() * r;
                (1.0 + x + x * x / 3.0) * (-x).exp()
            }
            KernelFamily::Matern12 => (-r).exp(),
        };
        self.variance * shape
    }

    /// Analytic `K̈(0)`; strictly negative for every smooth family.
    pub fn second_derivative_at_zero(&self) -> Result<f64> {
        let curvature = self.variance / (self.lengthscale * self.lengthscale);
        match self.family {
            KernelFamily::SquaredExponential => Ok(-curvature),
            KernelFamily::Matern32 => Ok(-3.0 * curvature),
            KernelFamily::Matern52 => Ok(-5.0 * curvature / 3.0),
            KernelFamily::Matern12 => Err(Error::NotTwiceDifferentiable(self.family)),
        }
    }

    /// The second spectral moment `−K̈(0)`.
    pub fn spectral_moment(&self) -> Result<f64> {
        self.second_derivative_at_zero().map(|k2| -k2)
    }
}
