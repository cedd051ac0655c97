//! Quadrature grids for discretizing integral operators, plus a globally
//! adaptive Gauss-Kronrod integrator for scalar integrals.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    GaussLegendre,
    Trapezoid,
}

/// Rule and node count, independent of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default)]
    pub rule: QuadratureRule,
    pub size: usize,
}

impl GridSpec {
    pub fn gauss_legendre(size: usize) -> Self {
        Self { rule: QuadratureRule::GaussLegendre, size }
    }

    pub fn trapezoid(size: usize) -> Self {
        Self { rule: QuadratureRule::Trapezoid, size }
    }

    pub fn build(&self, a: f64, b: f64) -> Result<Grid> {
        match self.rule {
            QuadratureRule::GaussLegendre => Grid::gauss_legendre(a, b, self.size),
            QuadratureRule::Trapezoid => Grid::trapezoid(a, b, self.size),
        }
    }
}

/// Quadrature nodes and positive weights on a finite interval `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    interval: (f64, f64),
    rule: QuadratureRule,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// `n`-point Gauss-Legendre rule mapped to `[a, b]`.
    pub fn gauss_legendre(a: f64, b: f64, n: usize) -> Result<Self> {
        check_interval(a, b)?;
        if n == 0 {
            return Err(Error::Argument("a grid needs at least one node".into()));
        }
        let (x, w) = legendre_nodes_weights(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes = x.iter().map(|&xi| mid + half * xi).collect();
        let weights = w.iter().map(|&wi| half * wi).collect();
        Self::from_parts((a, b), QuadratureRule::GaussLegendre, nodes, weights)
    }

    /// Composite trapezoid rule on `n ≥ 2` equispaced nodes including both ends.
    pub fn trapezoid(a: f64, b: f64, n: usize) -> Result<Self> {
        check_interval(a, b)?;
        if n < 2 {
            return Err(Error::Argument(format!("trapezoid rule needs at least 2 nodes, got {n}")));
        }
        let h = (b - a) / (n - 1) as f64;
        let nodes = (0..n)
            .map(|i| if i + 1 == n { b } else { a + h * i as f64 })
            .collect();
        Self::trapezoid_on_nodes(nodes)
    }

    /// Trapezoid weights on arbitrary strictly increasing nodes.
    pub fn trapezoid_on_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Argument("trapezoid rule needs at least 2 nodes".into()));
        }
        let n = nodes.len();
        let weights = (0..n)
            .map(|i| {
                let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
                let right = if i + 1 < n { nodes[i + 1] - nodes[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect();
        let interval = (nodes[0], nodes[n - 1]);
        Self::from_parts(interval, QuadratureRule::Trapezoid, nodes, weights)
    }

    /// Assembles a grid and checks its invariants.
    pub fn from_parts(
        interval: (f64, f64),
        rule: QuadratureRule,
        nodes: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let (a, b) = interval;
        check_interval(a, b)?;
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::Argument(format!(
                "grid needs matching non-empty nodes and weights ({} vs {})",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(i) = nodes.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::Argument(format!(
                "grid nodes must be strictly increasing (index {} -> {})",
                i,
                i + 1
            )));
        }
        if nodes[0] < a || nodes[nodes.len() - 1] > b {
            return Err(Error::Argument(format!("grid nodes leave [{a}, {b}]")));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Argument("grid weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - (b - a)).abs() > 1e-10 * (b - a) {
            return Err(Error::Argument(format!(
                "grid weights sum to {total}, expected {}",
                b - a
            )));
        }
        Ok(Self {
            interval,
            rule,
            nodes,
            weights,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i f_i`
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        self.weights.iter().zip(samples).map(|(w, f)| w * f).sum()
    }

    /// `Σ w_i f_i g_i`
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// The discrete L² norm `(Σ w_i f_i²)^{1/2}`.
    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::Argument(format!("grid interval must satisfy a < b, got [{a}, {b}]")))
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
///
/// Newton iteration on the three-term recurrence; accurate to a few ulps for
/// the sizes used here (up to a few thousand nodes).
pub fn legendre_nodes_weights(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's initial guess for the i-th largest root.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[n - 1 - i] = z;
        w[n - 1 - i] = weight;
        x[i] = -z;
        w[i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK constants).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Result of [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7/K15 quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`. Bisects the piece with the largest error estimate until
/// the summed estimate drops below `tol`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Integral> {
    const MAX_PIECES: usize = 4096;
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("quadrature tolerance must be > 0, got {tol}")));
    }
    let (value, error) = gauss_kronrod_15(&f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_error = error;
    while total_error > tol {
        if heap.len() >= MAX_PIECES {
            return Err(Error::Quadrature {
                estimate: total,
                error: total_error,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted in floating point.
            return Err(Error::Quadrature {
                estimate: total,
                error: total_error,
            });
        }
        let (v1, e1) = gauss_kronrod_15(&f, worst.a, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        // Re-sum to stop drift from the running updates.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}
