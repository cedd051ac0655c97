//! The modulated kernel `K_θ(t, s) = K(|θ(t) − θ(s)|)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::warp::Warping;

/// `K(|θ(t) − θ(s)|)`
pub fn evaluate_modulated(k: &KernelSpec, w: &Warping, t: f64, s: f64) -> Result<f64> {
    let (u, v) = (w.theta(t)?, w.theta(s)?);
    k.evaluate((u - v).abs())
}

/// `lim_{s→t} ∂²K_θ(t, s)/∂t∂s = −K̈(0)·θ̇(t)²`, the variance of the
/// derivative process at `t`.
pub fn mixed_partial_diag(k: &KernelSpec, w: &Warping, t: f64) -> Result<f64> {
    let moment = k.spectral_moment()?;
    let speed = w.theta_dot(t)?;
    Ok(moment * speed * speed)
}

/// Diagonal loading schedule for Cholesky: start at `start·σ²`, multiply by
/// `factor` after each failure, give up above `max·σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub start: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            start: 1e-12,
            factor: 10.0,
            max: 1e-6,
        }
    }
}

/// A modulated Gram matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    /// `K_θ(t_i, t_j)` without jitter.
    pub values: DMatrix<f64>,
    pub nodes: Vec<f64>,
    /// Absolute diagonal loading that made Cholesky succeed.
    pub jitter_applied: f64,
    /// Lower-triangular `L` with `L Lᵀ = values + jitter_applied·I`.
    pub cholesky: DMatrix<f64>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Unjittered `K_θ(t_i, t_j)` on the given nodes.
pub fn gram_values(k: &KernelSpec, w: &Warping, nodes: &[f64]) -> Result<DMatrix<f64>> {
    let warped = nodes.iter().map(|&t| w.theta(t)).collect::<Result<Vec<_>>>()?;
    let n = warped.len();
    let rows: Vec<Vec<f64>> = warped
        .par_iter()
        .map(|&u| warped.iter().map(|&v| k.eval_unchecked((u - v).abs())).collect())
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Builds the Gram matrix on `nodes` and factors it, escalating jitter per
/// `policy` until Cholesky succeeds.
pub fn gram(k: &KernelSpec, w: &Warping, nodes: &[f64], policy: &JitterPolicy) -> Result<GramMatrix> {
    if nodes.is_empty() {
        return Err(Error::Argument("gram matrix needs at least one node".into()));
    }
    if nodes.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Argument("gram nodes must be strictly increasing".into()));
    }
    if !(policy.start > 0.0 && policy.factor > 1.0 && policy.max >= policy.start) {
        return Err(Error::Argument(format!(
            "jitter policy needs 0 < start <= max and factor > 1, got {policy:?}"
        )));
    }
    let values = gram_values(k, w, nodes)?;
    let scale = k.variance();
    let cap = policy.max * scale * (1.0 + 1e-9);
    let mut jitter = policy.start * scale;
    loop {
        let mut loaded = values.clone();
        for i in 0..loaded.nrows() {
            loaded[(i, i)] += jitter;
        }
        if let Some(chol) = loaded.cholesky() {
            return Ok(GramMatrix {
                values,
                nodes: nodes.to_vec(),
                jitter_applied: jitter,
                cholesky: chol.unpack(),
            });
        }
        jitter *= policy.factor;
        if jitter > cap {
            return Err(Error::JitterExceeded { max_jitter: policy.max * scale });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn se() -> KernelSpec {
        KernelSpec::squared_exponential(1.0, 1.0).unwrap()
    }

    #[test]
    fn identity_reduces_to_stationary() {
        let w = Warping::identity(0.0, 5.0).unwrap();
        for fam in KernelFamily::ALL {
            let k = KernelSpec::new(fam, 1.3, 0.7).unwrap();
            assert_eq!(evaluate_modulated(&k, &w, 1.0, 3.0).unwrap(), k.evaluate(2.0).unwrap());
            assert_eq!(evaluate_modulated(&k, &w, 2.5, 2.5).unwrap(), 1.3);
        }
    }

    #[test]
    fn affine_stretches_lags() {
        let w = Warping::affine(2.0, 0.0, 0.0, 5.0).unwrap();
        assert_relative_eq!(
            evaluate_modulated(&se(), &w, 0.0, 1.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-15
        );
        assert!(evaluate_modulated(&se(), &w, 0.0, 6.0).is_err());
    }

    #[test]
    fn small_gram_examples() {
        let w = Warping::identity(0.0, 1.0).unwrap();
        let g = gram(&se(), &w, &[0.0], &JitterPolicy::default()).unwrap();
        assert_eq!(g.values, DMatrix::from_element(1, 1, 1.0));

        let g = gram(&se(), &w, &[0.0, 1.0], &JitterPolicy::default()).unwrap();
        let c = (-0.5f64).exp();
        assert_eq!(g.values, DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]));
        assert_eq!(g.jitter_applied, 1e-12);
    }

    #[test]
    fn dense_soft_shift_gram_factors_with_small_jitter() {
        let w = Warping::soft_shift(0.0, 4.0).unwrap();
        let nodes: Vec<f64> = (0..64).map(|i| 4.0 * i as f64 / 63.0).collect();
        let g = gram(&se(), &w, &nodes, &JitterPolicy::default()).unwrap();
        assert!(g.jitter_applied <= 1e-8, "jitter {}", g.jitter_applied);
        for i in 0..64 {
            assert_eq!(g.values[(i, i)], 1.0);
            for j in 0..64 {
                assert_eq!(g.values[(i, j)], g.values[(j, i)]);
            }
        }
        let rebuilt = &g.cholesky * g.cholesky.transpose();
        let mut loaded = g.values.clone();
        for i in 0..64 {
            loaded[(i, i)] += g.jitter_applied;
        }
        assert!((rebuilt - loaded).amax() < 1e-12);
    }

    #[test]
    fn jitter_cap_is_enforced() {
        let w = Warping::identity(0.0, 1.0).unwrap();
        // 200 nodes in [0, 1e-2] are numerically rank one for SE(ℓ = 1).
        let nodes: Vec<f64> = (0..200).map(|i| 1e-4 * i as f64 / 2.0).collect();
        let strict = JitterPolicy { start: 1e-16, factor: 10.0, max: 1e-15 };
        assert!(matches!(
            gram(&se(), &w, &nodes, &strict),
            Err(Error::JitterExceeded { .. })
        ));
        assert!(gram(&se(), &w, &[0.0, 0.0], &JitterPolicy::default()).is_err());
        let stuck = JitterPolicy { start: 0.0, factor: 10.0, max: 1e-6 };
        assert!(matches!(gram(&se(), &w, &[0.0], &stuck), Err(Error::Argument(_))));
    }

    #[test]
    fn identity_gram_matches_stationary_entrywise() {
        let w = Warping::identity(-3.0, 3.0).unwrap();
        let nodes: Vec<f64> = (0..30).map(|i| -3.0 + 0.2 * i as f64).collect();
        let k = KernelSpec::matern32(2.0, 0.5).unwrap();
        let g = gram_values(&k, &w, &nodes).unwrap();
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                assert_eq!(g[(i, j)], k.evaluate((nodes[i] - nodes[j]).abs()).unwrap());
            }
        }
    }

    #[test]
    fn mixed_partial_examples() {
        let id = Warping::identity(0.0, 10.0).unwrap();
        let aff = Warping::affine(2.0, 0.0, 0.0, 10.0).unwrap();
        assert_eq!(mixed_partial_diag(&se(), &id, 3.0).unwrap(), 1.0);
        assert_eq!(mixed_partial_diag(&se(), &aff, 3.0).unwrap(), 4.0);
        let m52 = KernelSpec::matern52(1.0, 1.0).unwrap();
        assert_relative_eq!(mixed_partial_diag(&m52, &id, 0.0).unwrap(), 5.0 / 3.0);
        let m12 = KernelSpec::matern12(1.0, 1.0).unwrap();
        assert!(matches!(
            mixed_partial_diag(&m12, &id, 0.0),
            Err(Error::NotTwiceDifferentiable(_))
        ));
    }

    /// Central-difference estimate of ∂²K_θ/∂t∂s at (t, t).
    fn fd_mixed_partial(k: &KernelSpec, w: &Warping, t: f64, h: f64) -> f64 {
        let kt = |a: f64, b: f64| evaluate_modulated(k, w, a, b).unwrap();
        (kt(t + h, t + h) - kt(t + h, t - h) - kt(t - h, t + h) + kt(t - h, t - h)) / (4.0 * h * h)
    }

    #[test]
    fn finite_difference_mixed_partial_agrees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let warps = [
            Warping::identity(0.0, 10.0).unwrap(),
            Warping::affine(2.0, 1.0, 0.0, 10.0).unwrap(),
            Warping::soft_shift(0.0, 10.0).unwrap(),
            Warping::exp_approach(0.0, 10.0).unwrap(),
        ];
        for fam in KernelFamily::ALL.into_iter().filter(|f| f.is_twice_differentiable()) {
            let k = KernelSpec::new(fam, 1.0, 1.0).unwrap();
            for w in &warps {
                for _ in 0..50 {
                    let t = rng.gen_range(0.001..9.999);
                    let exact = mixed_partial_diag(&k, w, t).unwrap();
                    let fd = fd_mixed_partial(&k, w, t, 1e-4);
                    assert!(((fd - exact) / exact).abs() <= 1e-3, "{fam:?} {:?} t={t}: {fd} vs {exact}", w.kind());
                }
            }
        }
    }
}
