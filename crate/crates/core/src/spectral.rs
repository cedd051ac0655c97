//! Nyström eigendecomposition of covariance integral operators and the
//! transport map between stationary and modulated eigenfunctions.
//!
//! Two discretized operators are available for a modulated kernel on `[a, b]`:
//!
//! * [`Measure::Lebesgue`]: `f ↦ ∫ₐᵇ K(|θ(t) − θ(s)|) f(s) ds`, the plain
//!   integral operator of `K_θ`.
//! * [`Measure::Warped`]: `f ↦ √θ̇(t) ∫ₐᵇ K(|θ(t) − θ(s)|) √θ̇(s) f(s) ds`,
//!   which is `M_θ T_K M_θ⁻¹` exactly in the continuum, with
//!   `M_θ[ψ](t) = √θ̇(t) ψ(θ(t))`.
//!
//! The two coincide when `θ̇ ≡ 1`. Otherwise the change of variables
//! `u = θ(s)` produces the Jacobian `θ̇(s)`, which only the warped form
//! absorbs. The reports below quantify how far each form is from the
//! stationary spectrum on the image interval `[θ(a), θ(b)]`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::modkernel::{gram, JitterPolicy};
use crate::quadrature::{Grid, GridSpec};
use crate::warp::Warping;

/// Which integral operator a modulated eigenproblem discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `∫ K_θ(t, s) f(s) ds`
    #[default]
    Lebesgue,
    /// `√θ̇(t) ∫ K_θ(t, s) √θ̇(s) f(s) ds`
    Warped,
}

impl Measure {
    fn speed_factors(self, w: &Warping, nodes: &[f64]) -> Result<Vec<f64>> {
        match self {
            Measure::Lebesgue => Ok(vec![1.0; nodes.len()]),
            Measure::Warped => nodes.iter().map(|&t| w.theta_dot(t).map(f64::sqrt)).collect(),
        }
    }
}

/// A real function on a closed interval that can be evaluated anywhere in it.
pub trait IntervalFunction {
    fn domain(&self) -> (f64, f64);
    fn eval(&self, x: f64) -> Result<f64>;

    fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        grid.nodes().iter().map(|&x| self.eval(x)).collect()
    }
}

/// A closure together with the interval it is defined on.
pub struct FnOnInterval<F> {
    pub domain: (f64, f64),
    pub f: F,
}

impl<F: Fn(f64) -> f64> FnOnInterval<F> {
    pub fn new(lo: f64, hi: f64, f: F) -> Self {
        Self { domain: (lo, hi), f }
    }
}

impl<F: Fn(f64) -> f64> IntervalFunction for FnOnInterval<F> {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn eval(&self, x: f64) -> Result<f64> {
        check_within(self.domain, x)?;
        Ok((self.f)(x))
    }
}

fn check_within((lo, hi): (f64, f64), x: f64) -> Result<()> {
    if x >= lo && x <= hi {
        Ok(())
    } else {
        Err(Error::Domain(format!("{x} lies outside [{lo}, {hi}]")))
    }
}

/// Leading eigenpairs of a discretized covariance operator.
///
/// Column `n` of `eigenvectors` samples the `n`-th eigenfunction at the grid
/// nodes, normalized so that `Σ_i w_i φ_n(t_i)² = 1`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub kernel: KernelSpec,
    pub warping: Warping,
    pub measure: Measure,
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub jitter_applied: f64,
}

impl EigenSystem {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn samples(&self, mode: usize) -> Vec<f64> {
        self.eigenvectors.column(mode).iter().copied().collect()
    }

    /// The `mode`-th eigenfunction, extended off-grid through the kernel:
    /// `φ(x) = λ⁻¹ c(x) Σ_j w_j K_θ(x, t_j) c(t_j) φ(t_j)` with `c = √θ̇`
    /// for the warped measure and `c = 1` otherwise.
    pub fn mode(&self, mode: usize) -> Result<ModeFunction> {
        if mode >= self.n_modes() {
            return Err(Error::Argument(format!(
                "mode {mode} requested but only {} computed",
                self.n_modes()
            )));
        }
        let lambda = self.eigenvalues[mode];
        if !(lambda > 0.0) {
            return Err(Error::Argument(format!(
                "mode {mode} has eigenvalue {lambda}; Nyström extension needs λ > 0"
            )));
        }
        let nodes = self.grid.nodes();
        let speed = self.measure.speed_factors(&self.warping, nodes)?;
        let warped_nodes = nodes.iter().map(|&t| self.warping.theta(t)).collect::<Result<Vec<_>>>()?;
        let coefficients = (0..nodes.len())
            .map(|j| self.grid.weights()[j] * speed[j] * self.eigenvectors[(j, mode)] / lambda)
            .collect();
        Ok(ModeFunction {
            kernel: self.kernel,
            warping: self.warping.clone(),
            measure: self.measure,
            domain: self.grid.interval(),
            warped_nodes,
            coefficients,
            eigenvalue: lambda,
        })
    }
}

/// An eigenfunction with its Nyström extension.
#[derive(Debug, Clone)]
pub struct ModeFunction {
    kernel: KernelSpec,
    warping: Warping,
    measure: Measure,
    domain: (f64, f64),
    warped_nodes: Vec<f64>,
    coefficients: Vec<f64>,
    pub eigenvalue: f64,
}

impl IntervalFunction for ModeFunction {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn eval(&self, x: f64) -> Result<f64> {
        check_within(self.domain, x)?;
        let u = self.warping.theta(x)?;
        let sum: f64 = self
            .warped_nodes
            .iter()
            .zip(&self.coefficients)
            .map(|(&v, c)| c * self.kernel.eval_unchecked((u - v).abs()))
            .sum();
        Ok(match self.measure {
            Measure::Lebesgue => sum,
            Measure::Warped => sum * self.warping.theta_dot(x)?.sqrt(),
        })
    }
}

/// Top `n_modes` eigenpairs of the plain integral operator of `K_θ` on the
/// grid's interval. With an identity warping this is the stationary `T_K`.
pub fn nystrom_eig(k: &KernelSpec, w: &Warping, grid: &Grid, n_modes: usize) -> Result<EigenSystem> {
    nystrom_eig_with(k, w, grid, n_modes, Measure::Lebesgue)
}

/// [`nystrom_eig`] for either operator form.
///
/// Solves the symmetric problem `D G D v = λ v`, `D = diag(√(w_i c_i²))`,
/// then returns `φ_i = v_i / √w_i`.
pub fn nystrom_eig_with(
    k: &KernelSpec,
    w: &Warping,
    grid: &Grid,
    n_modes: usize,
    measure: Measure,
) -> Result<EigenSystem> {
    let n = grid.len();
    if n_modes == 0 || n_modes > n {
        return Err(Error::Argument(format!(
            "requested {n_modes} modes on a {n}-node grid"
        )));
    }
    let g = gram(k, w, grid.nodes(), &JitterPolicy::default())?;
    let speed = measure.speed_factors(w, grid.nodes())?;
    let root_w: Vec<f64> = grid.weights().iter().map(|x| x.sqrt()).collect();
    let d: Vec<f64> = root_w.iter().zip(&speed).map(|(r, c)| r * c).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| d[i] * g.values[(i, j)] * d[j]);

    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut eigenvectors = DMatrix::zeros(n, n_modes);
    for (col, &idx) in order.iter().take(n_modes).enumerate() {
        let raw = eig.eigenvalues[idx];
        // The operator is positive semidefinite, so negative values are round-off.
        let lambda = raw.max(0.0);
        eigenvalues.push(lambda);
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[(i, col)] = sign * v[i] / root_w[i];
        }
    }
    Ok(EigenSystem {
        kernel: *k,
        warping: w.clone(),
        measure,
        grid: grid.clone(),
        eigenvalues,
        eigenvectors,
        jitter_applied: g.jitter_applied,
    })
}

/// `M_θ[ψ](t_i) = ψ(θ(t_i)) √θ̇(t_i)` on the target grid over `[a, b]`.
/// `psi` must cover `θ([a, b])`.
pub fn transport(psi: &dyn IntervalFunction, w: &Warping, target: &Grid) -> Result<Vec<f64>> {
    let (lo, hi) = psi.domain();
    target
        .nodes()
        .iter()
        .map(|&t| {
            let u = w.theta(t)?;
            if !(u >= lo && u <= hi) {
                return Err(Error::Domain(format!(
                    "θ({t}) = {u} falls outside the source interval [{lo}, {hi}]"
                )));
            }
            Ok(psi.eval(u)? * w.theta_dot(t)?.sqrt())
        })
        .collect()
}

/// `M_θ⁻¹[φ](u_j) = φ(θ⁻¹(u_j)) / √θ̇(θ⁻¹(u_j))` on a target grid over the
/// image interval.
pub fn inverse_transport(phi: &dyn IntervalFunction, w: &Warping, target: &Grid) -> Result<Vec<f64>> {
    let (lo, hi) = phi.domain();
    target
        .nodes()
        .iter()
        .map(|&u| {
            let t = w.theta_inverse(u)?;
            if !(t >= lo && t <= hi) {
                return Err(Error::Domain(format!(
                    "θ⁻¹({u}) = {t} falls outside the source interval [{lo}, {hi}]"
                )));
            }
            Ok(phi.eval(t)? / w.theta_dot(t)?.sqrt())
        })
        .collect()
}

fn require_validated(w: &Warping, a: f64, b: f64) -> Result<Warping> {
    if !w.is_validated() {
        return Err(Error::NotValidated);
    }
    let (lo, hi) = w.domain();
    if a < lo || b > hi {
        return Err(Error::Domain(format!(
            "interval [{a}, {b}] is not inside the warping domain [{lo}, {hi}]"
        )));
    }
    Ok(w.clone())
}

/// The modulated eigensystem on `[a, b]` and the stationary one on
/// `[θ(a), θ(b)]`, both with the same rule and node count.
pub fn matched_eigensystems(
    k: &KernelSpec,
    w: &Warping,
    interval: (f64, f64),
    grid: GridSpec,
    n_modes: usize,
    measure: Measure,
) -> Result<(EigenSystem, EigenSystem)> {
    let (a, b) = interval;
    let w = require_validated(w, a, b)?;
    let (ua, ub) = (w.theta(a)?, w.theta(b)?);
    let modulated = nystrom_eig_with(k, &w, &grid.build(a, b)?, n_modes, measure)?;
    let stationary = nystrom_eig_with(
        k,
        &Warping::identity(ua, ub)?,
        &grid.build(ua, ub)?,
        n_modes,
        Measure::Lebesgue,
    )?;
    Ok((modulated, stationary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub measure: Measure,
    pub interval: (f64, f64),
    pub image_interval: (f64, f64),
    pub grid: GridSpec,
    pub modulated_eigenvalues: Vec<f64>,
    pub stationary_eigenvalues: Vec<f64>,
    pub relative_differences: Vec<f64>,
    pub max_relative_difference: f64,
}

/// Compares the modulated spectrum on `[a, b]` with the stationary spectrum
/// on the matched image interval, mode by mode.
pub fn check_eigenvalue_invariance(
    k: &KernelSpec,
    w: &Warping,
    interval: (f64, f64),
    grid: GridSpec,
    n_modes: usize,
    measure: Measure,
) -> Result<InvarianceReport> {
    let (modulated, stationary) = matched_eigensystems(k, w, interval, grid, n_modes, measure)?;
    let relative_differences: Vec<f64> = modulated
        .eigenvalues
        .iter()
        .zip(&stationary.eigenvalues)
        .map(|(&m, &s)| {
            let diff = (m - s).abs();
            if s != 0.0 {
                diff / s.abs()
            } else {
                diff
            }
        })
        .collect();
    Ok(InvarianceReport {
        measure,
        interval,
        image_interval: stationary.grid.interval(),
        grid,
        max_relative_difference: relative_differences.iter().copied().fold(0.0, f64::max),
        modulated_eigenvalues: modulated.eigenvalues,
        stationary_eigenvalues: stationary.eigenvalues,
        relative_differences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeTransport {
    pub mode: usize,
    pub modulated_eigenvalue: f64,
    pub stationary_eigenvalue: f64,
    /// `min_{s=±1} ‖φ_n − s·M_θψ_n‖` in the quadrature norm on `[a, b]`.
    pub error: f64,
    pub sign: f64,
    /// Quadrature norm of `M_θψ_n`; 1 when normalization is preserved.
    pub transported_norm: f64,
    /// `λ_n / λ_{n+1} < 1 + 1e-6`: eigenvectors are not individually defined.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportReport {
    pub measure: Measure,
    pub interval: (f64, f64),
    pub grid: GridSpec,
    pub modes: Vec<ModeTransport>,
    /// Largest error over non-degenerate modes.
    pub max_error: f64,
}

impl TransportReport {
    /// The first `count` non-degenerate modes.
    pub fn leading_nondegenerate(&self, count: usize) -> impl Iterator<Item = &ModeTransport> {
        self.modes.iter().filter(|m| !m.degenerate).take(count)
    }
}

/// Transports each stationary eigenfunction `ψ_n` from `[θ(a), θ(b)]` with
/// `M_θ` and compares it with the modulated eigenfunction `φ_n` on `[a, b]`.
pub fn check_transport_eigenfunctions(
    k: &KernelSpec,
    w: &Warping,
    interval: (f64, f64),
    grid: GridSpec,
    n_modes: usize,
    measure: Measure,
) -> Result<TransportReport> {
    // One extra mode to test the gap after the last requested one.
    let solve_modes = (n_modes + 1).min(grid.size);
    let (modulated, stationary) = matched_eigensystems(k, w, interval, grid, solve_modes, measure)?;
    let target = &modulated.grid;
    let mut modes = Vec::with_capacity(n_modes);
    for n in 0..n_modes.min(solve_modes) {
        let lam = modulated.eigenvalues[n];
        let next = modulated.eigenvalues.get(n + 1).copied();
        let degenerate = lam <= 0.0 || matches!(next, Some(nx) if nx > 0.0 && lam / nx < 1.0 + 1e-6);
        let (error, sign, transported_norm) = if stationary.eigenvalues[n] > 0.0 {
            let psi = stationary.mode(n)?;
            let moved = transport(&psi, w, target)?;
            let phi = modulated.samples(n);
            let err_for = |s: f64| {
                let diff: Vec<f64> = phi.iter().zip(&moved).map(|(p, m)| p - s * m).collect();
                target.norm(&diff)
            };
            let (plus, minus) = (err_for(1.0), err_for(-1.0));
            let (error, sign) = if plus <= minus { (plus, 1.0) } else { (minus, -1.0) };
            (error, sign, target.norm(&moved))
        } else {
            (f64::NAN, 1.0, f64::NAN)
        };
        modes.push(ModeTransport {
            mode: n,
            modulated_eigenvalue: lam,
            stationary_eigenvalue: stationary.eigenvalues[n],
            error,
            sign,
            transported_norm,
            degenerate: degenerate || error.is_nan(),
        });
    }
    let max_error = modes
        .iter()
        .filter(|m| !m.degenerate)
        .map(|m| m.error)
        .fold(0.0, f64::max);
    Ok(TransportReport {
        measure,
        interval,
        grid,
        modes,
        max_error,
    })
}

/// A labelled test function for the conjugation check.
pub struct TestFunction {
    pub label: String,
    pub function: Box<dyn IntervalFunction + Send + Sync>,
}

impl TestFunction {
    pub fn new(label: impl Into<String>, function: impl IntervalFunction + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            function: Box::new(function),
        }
    }
}

/// A sum of three low-frequency sinusoids on `[a, b]`, drawn from `seed`.
pub fn random_smooth_function(a: f64, b: f64, seed: u64) -> FnOnInterval<impl Fn(f64) -> f64 + Send + Sync> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> = (1..=3)
        .map(|freq| {
            (
                rng.gen_range(-1.0..1.0),
                freq as f64 * std::f64::consts::PI / (b - a),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    FnOnInterval::new(a, b, move |x| {
        terms
            .iter()
            .map(|&(amp, omega, phase)| amp * (omega * (x - a) + phase).sin())
            .sum()
    })
}

/// The top five modulated eigenfunctions plus five seeded random smooth
/// functions.
pub fn default_test_functions(
    k: &KernelSpec,
    w: &Warping,
    interval: (f64, f64),
    grid: GridSpec,
    measure: Measure,
    seed: u64,
) -> Result<Vec<TestFunction>> {
    let (a, b) = interval;
    let w = require_validated(w, a, b)?;
    let modes = 5.min(grid.size);
    let system = nystrom_eig_with(k, &w, &grid.build(a, b)?, modes, measure)?;
    let mut tests = Vec::with_capacity(modes + 5);
    for n in 0..modes {
        if system.eigenvalues[n] > 0.0 {
            tests.push(TestFunction::new(format!("eigenfunction_{n}"), system.mode(n)?));
        }
    }
    for r in 0..5u64 {
        tests.push(TestFunction::new(
            format!("random_smooth_{r}"),
            random_smooth_function(a, b, seed.wrapping_add(r)),
        ));
    }
    Ok(tests)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugationResidual {
    pub label: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugationReport {
    pub measure: Measure,
    pub interval: (f64, f64),
    pub grid: GridSpec,
    pub residuals: Vec<ConjugationResidual>,
    pub max_residual: f64,
}

/// `r(f) = ‖T f − M_θ T_K M_θ⁻¹ f‖ / ‖f‖` on `[a, b]`, where `T` is the
/// modulated operator in the chosen measure and `T_K` acts on a grid of the
/// same rule and size over `[θ(a), θ(b)]`.
pub fn check_conjugation(
    k: &KernelSpec,
    w: &Warping,
    interval: (f64, f64),
    grid: GridSpec,
    test_functions: &[TestFunction],
    measure: Measure,
) -> Result<ConjugationReport> {
    let (a, b) = interval;
    let w = require_validated(w, a, b)?;
    let t_grid = grid.build(a, b)?;
    let (ua, ub) = (w.theta(a)?, w.theta(b)?);
    let u_grid = grid.build(ua, ub)?;

    let t_nodes = t_grid.nodes();
    let warped: Vec<f64> = t_nodes.iter().map(|&t| w.theta(t)).collect::<Result<_>>()?;
    let speed_sqrt: Vec<f64> = t_nodes.iter().map(|&t| w.theta_dot(t).map(f64::sqrt)).collect::<Result<_>>()?;
    let modulated_factor = measure.speed_factors(&w, t_nodes)?;

    let mut residuals = Vec::with_capacity(test_functions.len());
    for test in test_functions {
        let f = test.function.sample(&t_grid)?;
        let norm_f = t_grid.norm(&f);

        // T f on the modulated grid.
        let direct: Vec<f64> = (0..t_nodes.len())
            .map(|i| {
                let s: f64 = (0..t_nodes.len())
                    .map(|j| {
                        t_grid.weights()[j]
                            * k.eval_unchecked((warped[i] - warped[j]).abs())
                            * modulated_factor[j]
                            * f[j]
                    })
                    .sum();
                modulated_factor[i] * s
            })
            .collect();

        // M_θ T_K M_θ⁻¹ f: pull back to the image grid, apply T_K there,
        // evaluate at θ(t_i) and push forward.
        let pulled = inverse_transport(test.function.as_ref(), &w, &u_grid)?;
        let conjugated: Vec<f64> = (0..t_nodes.len())
            .map(|i| {
                let s: f64 = u_grid
                    .nodes()
                    .iter()
                    .zip(u_grid.weights())
                    .zip(&pulled)
                    .map(|((&u, &wt), &g)| wt * k.eval_unchecked((warped[i] - u).abs()) * g)
                    .sum();
                speed_sqrt[i] * s
            })
            .collect();

        let diff: Vec<f64> = direct.iter().zip(&conjugated).map(|(x, y)| x - y).collect();
        let residual = if norm_f > 0.0 { t_grid.norm(&diff) / norm_f } else { t_grid.norm(&diff) };
        residuals.push(ConjugationResidual {
            label: test.label.clone(),
            residual,
        });
    }
    let max_residual = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(ConjugationReport {
        measure,
        interval,
        grid,
        residuals,
        max_residual,
    })
}
