//! Expected zero counts of the modulated process on `[0, T]`.
//!
//! Three analytic values are computed side by side:
//!
//! * `paper_value = √(−K̈(0)) · (θ(T) − θ(0))`
//! * `quadrature_value = ∫₀ᵀ √(−K̈(0) θ̇(t)²) dt`, the same quantity integrated
//!   numerically from the mixed-partial diagonal
//! * `rice_value = π⁻¹ · √(−K̈(0)/K(0)) · (θ(T) − θ(0))`, the classical
//!   Rice crossing rate integrated over warped time
//!
//! The first two agree identically. The third differs from them by the
//! constant factor `π√K(0)`; the Monte Carlo estimate in [`compare`]
//! decides empirically which one describes sign changes of sampled paths.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::modkernel::mixed_partial_diag;
use crate::pathsim::mc_expected_zeros;
use crate::quadrature::integrate_adaptive;
use crate::warp::{WarpKind, Warping};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

fn warped_increment(w: &Warping, horizon: f64) -> Result<f64> {
    if !(horizon >= 0.0) {
        return Err(Error::Domain(format!("horizon must be >= 0, got {horizon}")));
    }
    Ok(w.theta(horizon)? - w.theta(0.0)?)
}

/// `√(−K̈(0)) · (θ(T) − θ(0))`
pub fn expected_zeros_paper(k: &KernelSpec, w: &Warping, horizon: f64) -> Result<f64> {
    let moment = k.spectral_moment()?;
    Ok(moment.sqrt() * warped_increment(w, horizon)?)
}

/// `∫₀ᵀ √(mixed_partial_diag(t)) dt` by adaptive quadrature to absolute
/// tolerance `tol`. Tabulated warpings are integrated exactly per segment.
pub fn expected_zeros_quadrature(k: &KernelSpec, w: &Warping, horizon: f64, tol: f64) -> Result<f64> {
    let moment = k.spectral_moment()?;
    warped_increment(w, horizon)?;
    if horizon == 0.0 {
        return Ok(0.0);
    }
    if let WarpKind::Tabulated { nodes, values } = w.kind() {
        let root = moment.sqrt();
        let total = nodes
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| {
                let len = t[1].min(horizon) - t[0].max(0.0);
                if len > 0.0 {
                    root * (v[1] - v[0]) / (t[1] - t[0]) * len
                } else {
                    0.0
                }
            })
            .sum();
        return Ok(total);
    }
    let integrand = |t: f64| mixed_partial_diag(k, w, t).map_or(f64::NAN, f64::sqrt);
    Ok(integrate_adaptive(integrand, 0.0, horizon, tol)?.value)
}

/// `π⁻¹ · √(−K̈(0)/K(0)) · (θ(T) − θ(0))`
pub fn expected_zeros_rice(k: &KernelSpec, w: &Warping, horizon: f64) -> Result<f64> {
    let moment = k.spectral_moment()?;
    Ok((moment / k.variance()).sqrt() / PI * warped_increment(w, horizon)?)
}

/// Monte Carlo settings for [`compare`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Grid nodes per unit of warped time.
    pub density: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 0,
            density: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroCountReport {
    pub horizon: f64,
    pub warped_increment: f64,
    pub paper_value: f64,
    pub quadrature_value: f64,
    pub rice_value: f64,
    pub mc_mean: f64,
    pub mc_std_error: Option<f64>,
    pub ratio_mc_to_paper: Option<f64>,
    pub ratio_mc_to_rice: Option<f64>,
    /// `paper_value / rice_value = π√K(0)`.
    pub paper_to_rice_factor: f64,
    /// `(mc_mean − value) / mc_std_error`.
    pub z_score_paper: Option<f64>,
    pub z_score_rice: Option<f64>,
    /// The two closed forms disagree by more than round-off.
    pub formulas_disagree: bool,
    pub mc_n_paths: usize,
    pub mc_n_nodes: usize,
    pub mc_seed: u64,
    pub mc_density: f64,
    pub jitter_applied: f64,
}

impl ZeroCountReport {
    /// Whether the Monte Carlo mean is within `sigmas` standard errors of the
    /// given analytic value.
    pub fn mc_consistent_with(&self, value: f64, sigmas: f64) -> bool {
        match self.mc_std_error {
            Some(se) if se > 0.0 => (self.mc_mean - value).abs() <= sigmas * se,
            _ => self.mc_mean == value,
        }
    }

    pub fn summary_line(&self) -> String {
        let se = self.mc_std_error.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        let mut line = format!(
            "E[N(0,{})]: mc {:.4} ± {} | closed form {:.6} | quadrature {:.6} | rice {:.6}",
            self.horizon, self.mc_mean, se, self.paper_value, self.quadrature_value, self.rice_value
        );
        if self.formulas_disagree {
            line.push_str(&format!(
                " | WARNING: closed form and Rice form differ by factor {:.6}; mc/closed = {}, mc/rice = {}",
                self.paper_to_rice_factor,
                fmt_opt(self.ratio_mc_to_paper),
                fmt_opt(self.ratio_mc_to_rice)
            ));
        }
        line
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".to_string(), |v| format!("{v:.4}"))
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// Runs the three analytic formulas and the Monte Carlo estimate.
///
/// The smoothness requirement is checked before any sampling.
pub fn compare(k: &KernelSpec, w: &Warping, horizon: f64, mc: &McConfig) -> Result<ZeroCountReport> {
    let moment = k.spectral_moment()?;
    let increment = warped_increment(w, horizon)?;
    let paper_value = expected_zeros_paper(k, w, horizon)?;
    let quadrature_value = expected_zeros_quadrature(k, w, horizon, DEFAULT_TOLERANCE)?;
    let rice_value = expected_zeros_rice(k, w, horizon)?;
    let estimate = mc_expected_zeros(k, w, horizon, mc.density, mc.n_paths, mc.seed)?;

    let z = |value: f64| estimate.std_error.filter(|&s| s > 0.0).map(|s| (estimate.mean - value) / s);
    let paper_to_rice_factor = PI * k.variance().sqrt();
    Ok(ZeroCountReport {
        horizon,
        warped_increment: increment,
        paper_value,
        quadrature_value,
        rice_value,
        mc_mean: estimate.mean,
        mc_std_error: estimate.std_error,
        ratio_mc_to_paper: ratio(estimate.mean, paper_value),
        ratio_mc_to_rice: ratio(estimate.mean, rice_value),
        paper_to_rice_factor,
        z_score_paper: z(paper_value),
        z_score_rice: z(rice_value),
        formulas_disagree: moment > 0.0 && (paper_to_rice_factor - 1.0).abs() > 1e-12,
        mc_n_paths: estimate.n_paths,
        mc_n_nodes: estimate.n_nodes,
        mc_seed: mc.seed,
        mc_density: mc.density,
        jitter_applied: estimate.jitter_applied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn se() -> KernelSpec {
        KernelSpec::squared_exponential(1.0, 1.0).unwrap()
    }

    fn builtins() -> Vec<Warping> {
        vec![
            Warping::identity(0.0, 20.0).unwrap(),
            Warping::affine(2.0, 0.0, 0.0, 20.0).unwrap(),
            Warping::affine(0.5, -3.0, 0.0, 20.0).unwrap(),
            Warping::soft_shift(0.0, 20.0).unwrap(),
            Warping::exp_approach(0.0, 20.0).unwrap(),
        ]
    }

    #[test]
    fn closed_form_examples() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        assert_eq!(expected_zeros_paper(&se(), &id, 10.0).unwrap(), 10.0);
        assert_eq!(expected_zeros_paper(&se(), &id, 0.0).unwrap(), 0.0);
        let m52 = KernelSpec::matern52(1.0, 1.0).unwrap();
        let aff = Warping::affine(2.0, 0.0, 0.0, 3.0).unwrap();
        assert_relative_eq!(
            expected_zeros_paper(&m52, &aff, 3.0).unwrap(),
            (5.0f64 / 3.0).sqrt() * 6.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(expected_zeros_paper(&m52, &aff, 3.0).unwrap(), 7.745967, max_relative = 1e-7);
    }

    #[test]
    fn quadrature_form_examples() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        let q = expected_zeros_quadrature(&se(), &id, 10.0, 1e-10).unwrap();
        assert!((q - 10.0).abs() <= 1e-10);

        let table = Warping::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(expected_zeros_quadrature(&se(), &table, 2.0, 1e-10).unwrap(), 4.0);
        assert_eq!(expected_zeros_quadrature(&se(), &table, 1.5, 1e-10).unwrap(), 2.5);
    }

    #[test]
    fn quadrature_matches_closed_form_for_builtins() {
        for fam in [crate::kernel::KernelFamily::SquaredExponential, crate::kernel::KernelFamily::Matern32] {
            let k = KernelSpec::new(fam, 2.0, 0.7).unwrap();
            for w in builtins() {
                for horizon in [0.5, 3.0, 17.0] {
                    let p = expected_zeros_paper(&k, &w, horizon).unwrap();
                    let q = expected_zeros_quadrature(&k, &w, horizon, DEFAULT_TOLERANCE).unwrap();
                    assert!(((p - q) / p).abs() <= 1e-8, "{:?} T={horizon}: {p} vs {q}", w.kind());
                }
            }
        }
    }

    #[test]
    fn rice_examples() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        assert_relative_eq!(expected_zeros_rice(&se(), &id, 10.0).unwrap(), 10.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(expected_zeros_rice(&se(), &id, 10.0).unwrap(), 3.183099, max_relative = 1e-6);
        let loud = KernelSpec::squared_exponential(4.0, 1.0).unwrap();
        assert_relative_eq!(expected_zeros_rice(&loud, &id, 10.0).unwrap(), 10.0 / PI, max_relative = 1e-15);
        assert_eq!(expected_zeros_rice(&se(), &id, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rough_kernel_is_rejected_before_sampling() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        let m12 = KernelSpec::matern12(1.0, 1.0).unwrap();
        // an absurd path count would take forever if sampling started
        let mc = McConfig { n_paths: usize::MAX / 2, ..McConfig::default() };
        assert!(matches!(compare(&m12, &id, 10.0, &mc), Err(Error::NotTwiceDifferentiable(_))));
        assert!(matches!(expected_zeros_quadrature(&m12, &id, 1.0, 1e-9), Err(Error::NotTwiceDifferentiable(_))));
    }

    #[test]
    fn zero_horizon_report() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        let r = compare(&se(), &id, 0.0, &McConfig { n_paths: 50, ..McConfig::default() }).unwrap();
        assert_eq!((r.paper_value, r.quadrature_value, r.rice_value, r.mc_mean), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.ratio_mc_to_paper, None);
    }

    #[test]
    fn horizon_outside_domain_is_an_error() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        assert!(matches!(expected_zeros_paper(&se(), &id, 11.0), Err(Error::Domain(_))));
        assert!(matches!(expected_zeros_rice(&se(), &id, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn small_pipeline_fills_every_field() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        let r = compare(&se(), &id, 10.0, &McConfig { n_paths: 500, seed: 1, density: 50.0 }).unwrap();
        assert_eq!(r.paper_value, 10.0);
        assert!(r.mc_std_error.is_some() && r.ratio_mc_to_paper.is_some() && r.ratio_mc_to_rice.is_some());
        assert!(r.formulas_disagree);
        assert!(r.summary_line().contains("WARNING"));
    }

    proptest! {
        #[test]
        fn rice_is_amplitude_invariant(scale in 0.01f64..100.0, ell in 0.2f64..5.0, horizon in 0.0f64..20.0) {
            let w = Warping::soft_shift(0.0, 20.0).unwrap();
            let a = KernelSpec::matern52(1.0, ell).unwrap();
            let b = KernelSpec::matern52(scale, ell).unwrap();
            let (ra, rb) = (expected_zeros_rice(&a, &w, horizon).unwrap(), expected_zeros_rice(&b, &w, horizon).unwrap());
            prop_assert!((ra - rb).abs() <= 1e-12 * (1.0 + ra.abs()));
        }

        #[test]
        fn values_depend_on_warping_only_through_increment(a in 0.2f64..4.0, b in -5.0f64..5.0, horizon in 0.1f64..5.0) {
            // Affine(a, b) on [0, T] and Identity on [0, a·T] share the increment.
            let aff = Warping::affine(a, b, 0.0, 5.0).unwrap();
            let id = Warping::identity(0.0, a * horizon).unwrap();
            let k = se();
            let p1 = expected_zeros_paper(&k, &aff, horizon).unwrap();
            let p2 = expected_zeros_paper(&k, &id, a * horizon).unwrap();
            prop_assert!((p1 - p2).abs() <= 1e-12 * p2.max(1.0));
            let r1 = expected_zeros_rice(&k, &aff, horizon).unwrap();
            let r2 = expected_zeros_rice(&k, &id, a * horizon).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r2.max(1.0));
        }

        #[test]
        fn analytic_values_are_monotone_in_horizon(t1 in 0.0f64..20.0, dt in 0.0f64..20.0) {
            let t2 = (t1 + dt).min(20.0);
            for w in builtins() {
                let k = se();
                prop_assert!(expected_zeros_paper(&k, &w, t1).unwrap() <= expected_zeros_paper(&k, &w, t2).unwrap());
                prop_assert!(expected_zeros_rice(&k, &w, t1).unwrap() <= expected_zeros_rice(&k, &w, t2).unwrap());
                let q1 = expected_zeros_quadrature(&k, &w, t1, DEFAULT_TOLERANCE).unwrap();
                let q2 = expected_zeros_quadrature(&k, &w, t2, DEFAULT_TOLERANCE).unwrap();
                prop_assert!(q1 <= q2 + 1e-9);
            }
        }
    }
}
