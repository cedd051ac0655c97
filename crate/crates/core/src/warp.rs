//! Monotone time changes `θ` used to modulate a stationary kernel.
//!
//! A warping must be strictly increasing with a positive, bounded,
//! piecewise-continuous derivative. All experiments live on a finite
//! working domain `[t_lo, t_hi]`, so the condition on the limiting slope at
//! infinity is checked as boundedness of `θ̇` on that domain.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The shape of `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpKind {
    Identity,
    /// `θ(t) = a·t + b`, `a > 0`
    Affine { a: f64, b: f64 },
    /// `θ(t) = t + ln(1 + t)` on `t ≥ 0`
    SoftShift,
    /// `θ(t) = t − e^{−t} + 1`
    ExpApproach,
    /// Piecewise-linear interpolation through `(nodes[i], values[i])`.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

/// A warping restricted to a closed working domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warping {
    kind: WarpKind,
    domain: (f64, f64),
    #[serde(skip)]
    validated: bool,
}

/// A pair of points `left < right` with `θ(left) ≥ θ(right)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub probe_count: usize,
    pub domain: (f64, f64),
    pub monotone: bool,
    pub min_derivative: f64,
    pub max_derivative: f64,
    pub derivative_bounded: bool,
    pub violations: Vec<Violation>,
    pub validated: bool,
}

impl Warping {
    pub fn identity(lo: f64, hi: f64) -> Result<Self> {
        Self::analytic(WarpKind::Identity, lo, hi)
    }

    pub fn affine(a: f64, b: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "affine warping needs finite a > 0 and finite b, got a={a}, b={b}"
            )));
        }
        Self::analytic(WarpKind::Affine { a, b }, lo, hi)
    }

    pub fn soft_shift(lo: f64, hi: f64) -> Result<Self> {
        if lo < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "soft-shift warping is defined on t >= 0, got domain start {lo}"
            )));
        }
        Self::analytic(WarpKind::SoftShift, lo, hi)
    }

    pub fn exp_approach(lo: f64, hi: f64) -> Result<Self> {
        Self::analytic(WarpKind::ExpApproach, lo, hi)
    }

    fn analytic(kind: WarpKind, lo: f64, hi: f64) -> Result<Self> {
        check_domain(lo, hi)?;
        Ok(Self {
            kind,
            domain: (lo, hi),
            validated: true,
        })
    }

    /// Builds a tabulated warping; the domain is `[nodes[0], nodes[last]]`.
    ///
    /// Nodes must be strictly increasing. Values are not required to be: a
    /// non-increasing table is accepted here and rejected by [`validate`].
    ///
    /// [`validate`]: Warping::validate
    pub fn tabulated(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "tabulated warping has {} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated warping needs at least two nodes".into(),
            ));
        }
        if nodes.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "tabulated warping contains a non-finite entry".into(),
            ));
        }
        if let Some(i) = nodes.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::InvalidParameter(format!(
                "tabulated nodes must be strictly increasing (nodes {} and {})",
                nodes[i],
                nodes[i + 1]
            )));
        }
        let validated = values.windows(2).all(|p| p[1] > p[0]);
        let domain = (nodes[0], nodes[nodes.len() - 1]);
        Ok(Self {
            kind: WarpKind::Tabulated { nodes, values },
            domain,
            validated,
        })
    }

    /// Reads a `t,theta` CSV table.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// Reads a `t,theta` CSV table; `source` names the input in errors.
    ///
    /// Line numbers in errors are 1-based and count the header.
    pub fn from_csv_reader(reader: impl Read, source: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "theta" {
            return Err(parse_err(1, format!("expected header `t,theta`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
            }
            let field = |i: usize, name: &str| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(line, format!("non-numeric {name} value `{}`", &record[i])))
            };
            let t = field(0, "t")?;
            let theta = field(1, "theta")?;
            if let Some(&prev) = nodes.last() {
                if t <= prev {
                    return Err(parse_err(
                        line,
                        format!("t must be strictly increasing ({t} follows {prev})"),
                    ));
                }
            }
            nodes.push(t);
            values.push(theta);
        }
        Self::tabulated(nodes, values)
    }

    pub fn kind(&self) -> &WarpKind {
        &self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, WarpKind::Identity)
    }

    /// The image interval `[θ(t_lo), θ(t_hi)]`.
    pub fn image(&self) -> Result<(f64, f64)> {
        Ok((self.theta(self.domain.0)?, self.theta(self.domain.1)?))
    }

    /// Restricts the working domain; tabulated warpings keep their table.
    pub fn with_domain(&self, lo: f64, hi: f64) -> Result<Self> {
        check_domain(lo, hi)?;
        if let WarpKind::Tabulated { nodes, .. } = &self.kind {
            if lo < nodes[0] || hi > nodes[nodes.len() - 1] {
                return Err(Error::Domain(format!(
                    "[{lo}, {hi}] is outside the tabulated range [{}, {}]",
                    nodes[0],
                    nodes[nodes.len() - 1]
                )));
            }
        }
        if matches!(self.kind, WarpKind::SoftShift) && lo < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "soft-shift warping is defined on t >= 0, got domain start {lo}"
            )));
        }
        Ok(Self {
            kind: self.kind.clone(),
            domain: (lo, hi),
            validated: self.validated,
        })
    }

    fn check_in_domain(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.domain;
        if t >= lo && t <= hi {
            Ok(())
        } else {
            Err(Error::Domain(format!("t = {t} is outside the warping domain [{lo}, {hi}]")))
        }
    }

    /// `θ(t)`.
    pub fn theta(&self, t: f64) -> Result<f64> {
        self.check_in_domain(t)?;
        Ok(match &self.kind {
            WarpKind::Identity => t,
            WarpKind::Affine { a, b } => a * t + b,
            WarpKind::SoftShift => t + t.ln_1p(),
            WarpKind::ExpApproach => t - (-t).exp() + 1.0,
            WarpKind::Tabulated { nodes, values } => {
                let i = segment_index(nodes, t);
                let (t0, t1) = (nodes[i], nodes[i + 1]);
                let (v0, v1) = (values[i], values[i + 1]);
                if t == t1 {
                    v1
                } else {
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        })
    }

    /// `θ̇(t)`; at a tabulated knot this is the slope of the segment to its
    /// right (the last knot uses the final segment).
    pub fn theta_dot(&self, t: f64) -> Result<f64> {
        self.check_in_domain(t)?;
        Ok(match &self.kind {
            WarpKind::Identity => 1.0,
            WarpKind::Affine { a, .. } => *a,
            WarpKind::SoftShift => 1.0 + 1.0 / (1.0 + t),
            WarpKind::ExpApproach => 1.0 + (-t).exp(),
            WarpKind::Tabulated { nodes, values } => {
                let i = segment_index(nodes, t);
                (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i])
            }
        })
    }

    /// `θ⁻¹(v)` for `v` in the image of the domain.
    pub fn theta_inverse(&self, v: f64) -> Result<f64> {
        if let WarpKind::Tabulated { .. } = self.kind {
            if !self.validated {
                return Err(Error::NotValidated);
            }
        }
        let (lo, hi) = self.domain;
        let (vlo, vhi) = (self.theta(lo)?, self.theta(hi)?);
        if !(v >= vlo && v <= vhi) {
            return Err(Error::Domain(format!(
                "v = {v} is outside the warping image [{vlo}, {vhi}]"
            )));
        }
        let t = match &self.kind {
            WarpKind::Identity => v,
            WarpKind::Affine { a, b } => (v - b) / a,
            WarpKind::Tabulated { nodes, values } => {
                let i = segment_index(values, v);
                let (v0, v1) = (values[i], values[i + 1]);
                if v == v1 {
                    nodes[i + 1]
                } else {
                    nodes[i] + (nodes[i + 1] - nodes[i]) * (v - v0) / (v1 - v0)
                }
            }
            WarpKind::SoftShift | WarpKind::ExpApproach => self.bisect(v, lo, hi),
        };
        Ok(t.clamp(lo, hi))
    }

    // Bisection until the bracket stops shrinking in floating point.
    fn bisect(&self, v: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |t: f64| match self.kind {
            WarpKind::SoftShift => t + t.ln_1p(),
            WarpKind::ExpApproach => t - (-t).exp() + 1.0,
            _ => unreachable!("closed-form inverse exists"),
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (f(lo) - v).abs() <= (f(hi) - v).abs() {
            lo
        } else {
            hi
        }
    }

    /// Checks strict monotonicity and derivative bounds, and records the
    /// outcome in the `validated` flag.
    ///
    /// Analytic kinds are probed on `probe_count` equispaced points.
    /// Tabulated warpings are checked exactly, segment by segment.
    pub fn validate(&mut self, probe_count: usize) -> Result<ValidationReport> {
        if probe_count < 2 {
            return Err(Error::Argument(format!(
                "validation needs at least 2 probes, got {probe_count}"
            )));
        }
        let (lo, hi) = self.domain;
        let mut violations = Vec::new();
        let mut min_derivative = f64::INFINITY;
        let mut max_derivative = f64::NEG_INFINITY;

        if let WarpKind::Tabulated { nodes, values } = &self.kind {
            for i in 0..nodes.len() - 1 {
                let slope = (values[i + 1] - values[i]) / (nodes[i + 1] - nodes[i]);
                min_derivative = min_derivative.min(slope);
                max_derivative = max_derivative.max(slope);
                if values[i + 1] <= values[i] {
                    violations.push(Violation {
                        left: nodes[i],
                        right: nodes[i + 1],
                    });
                }
            }
        } else {
            let step = (hi - lo) / (probe_count - 1) as f64;
            let probe = |i: usize| if i + 1 == probe_count { hi } else { lo + step * i as f64 };
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..probe_count {
                let t = probe(i);
                let value = self.theta(t)?;
                let slope = self.theta_dot(t)?;
                min_derivative = min_derivative.min(slope);
                max_derivative = max_derivative.max(slope);
                if let Some((pt, pv)) = prev {
                    if t > pt && value <= pv {
                        violations.push(Violation { left: pt, right: t });
                    }
                }
                prev = Some((t, value));
            }
        }

        let monotone = violations.is_empty();
        let derivative_bounded = max_derivative.is_finite();
        let validated = monotone && min_derivative > 0.0 && derivative_bounded;
        self.validated = validated;
        Ok(ValidationReport {
            probe_count,
            domain: self.domain,
            monotone,
            min_derivative,
            max_derivative,
            derivative_bounded,
            violations,
            validated,
        })
    }
}

fn check_domain(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "warping domain must be a finite interval, got [{lo}, {hi}]"
        )))
    }
}

// Index i of the segment [xs[i], xs[i+1]) holding x; the last knot maps to
// the final segment. `xs` must be increasing and x within its range.
fn segment_index(xs: &[f64], x: f64) -> usize {
    let k = xs.partition_point(|&node| node <= x);
    k.saturating_sub(1).min(xs.len() - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn builtins(lo: f64, hi: f64) -> Vec<Warping> {
        vec![
            Warping::identity(lo, hi).unwrap(),
            Warping::affine(2.0, 1.0, lo, hi).unwrap(),
            Warping::soft_shift(lo.max(0.0), hi).unwrap(),
            Warping::exp_approach(lo, hi).unwrap(),
        ]
    }

    #[test]
    fn theta_examples() {
        assert_eq!(Warping::identity(0.0, 10.0).unwrap().theta(3.5).unwrap(), 3.5);
        assert_eq!(Warping::affine(2.0, 1.0, 0.0, 10.0).unwrap().theta(3.0).unwrap(), 7.0);
        // 1 + ln 2
        assert_relative_eq!(
            Warping::soft_shift(0.0, 10.0).unwrap().theta(1.0).unwrap(),
            1.6931471805599454,
            max_relative = 1e-15
        );
    }

    #[test]
    fn theta_dot_examples() {
        assert_eq!(Warping::identity(-5.0, 5.0).unwrap().theta_dot(-2.0).unwrap(), 1.0);
        assert_eq!(Warping::affine(2.0, 1.0, 0.0, 1.0).unwrap().theta_dot(0.0).unwrap(), 2.0);
        let w = Warping::exp_approach(-1.0, 1.0).unwrap();
        let h = 1e-6;
        let fd = (w.theta(h).unwrap() - w.theta(-h).unwrap()) / (2.0 * h);
        assert!((fd - 2.0).abs() < 1e-8);
        assert_eq!(w.theta_dot(0.0).unwrap(), 2.0);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(Warping::affine(2.0, 1.0, 0.0, 10.0).unwrap().theta_inverse(7.0).unwrap(), 3.0);
        assert_eq!(Warping::identity(-10.0, 0.0).unwrap().theta_inverse(-4.0).unwrap(), -4.0);
        let w = Warping::soft_shift(0.0, 10.0).unwrap();
        assert!((w.theta_inverse(1.693147).unwrap() - 1.0).abs() < 1e-6);
        let exact = w.theta(1.0).unwrap();
        assert!((w.theta_inverse(exact).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        let w = Warping::soft_shift(0.0, 4.0).unwrap();
        assert!(matches!(w.theta(4.5), Err(Error::Domain(_))));
        assert!(matches!(w.theta_dot(-0.1), Err(Error::Domain(_))));
        assert!(matches!(w.theta_inverse(100.0), Err(Error::Domain(_))));
        assert!(Warping::soft_shift(-1.0, 4.0).is_err());
        assert!(Warping::affine(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(Warping::identity(1.0, 0.0).is_err());
    }

    #[test]
    fn tabulated_interpolation_and_knot_convention() {
        let w = Warping::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(w.theta(0.5).unwrap(), 0.5);
        assert_eq!(w.theta(1.5).unwrap(), 2.5);
        assert_eq!(w.theta(2.0).unwrap(), 4.0);
        assert_eq!(w.theta_dot(0.5).unwrap(), 1.0);
        // right-continuous at the interior knot
        assert_eq!(w.theta_dot(1.0).unwrap(), 3.0);
        assert_eq!(w.theta_dot(2.0).unwrap(), 3.0);
        assert_eq!(w.theta_inverse(2.5).unwrap(), 1.5);
        assert_eq!(w.theta_inverse(4.0).unwrap(), 2.0);
    }

    #[test]
    fn tabulated_construction_errors() {
        assert!(Warping::tabulated(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(Warping::tabulated(vec![0.0], vec![0.0]).is_err());
        assert!(Warping::tabulated(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        // ties in values fail validation, not construction
        let mut w = Warping::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert!(!w.is_validated());
        assert!(matches!(w.theta_inverse(0.5), Err(Error::NotValidated)));
        let report = w.validate(10).unwrap();
        assert!(!report.validated);
        assert_eq!(report.violations, vec![Violation { left: 1.0, right: 2.0 }]);
    }

    #[test]
    fn validate_examples() {
        let mut id = Warping::identity(0.0, 10.0).unwrap();
        let r = id.validate(101).unwrap();
        assert!(r.monotone && r.validated);
        assert_eq!((r.min_derivative, r.max_derivative), (1.0, 1.0));

        let mut bad = Warping::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.5]).unwrap();
        let r = bad.validate(101).unwrap();
        assert!(!r.monotone);
        assert_eq!(r.violations, vec![Violation { left: 1.0, right: 2.0 }]);
        assert!(!bad.is_validated());

        let mut ea = Warping::exp_approach(0.0, 10.0).unwrap();
        let r = ea.validate(1001).unwrap();
        assert!(r.monotone && r.validated);
        assert_eq!(r.max_derivative, 2.0);

        assert!(matches!(id.validate(1), Err(Error::Argument(_))));
    }

    #[test]
    fn csv_ingestion() {
        let w = Warping::from_csv_reader("t,theta\n0,0\n1,1\n2,4\n".as_bytes(), "mem").unwrap();
        assert_eq!(w.domain(), (0.0, 2.0));
        assert!(w.is_validated());

        let err = Warping::from_csv_reader("t,theta\n0,0\n1,abc\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let err = Warping::from_csv_reader("t,theta\n0,0\n2,1\n1,3\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");

        let err = Warping::from_csv_reader("time,value\n0,0\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        // decreasing θ loads, then fails validation
        let mut w = Warping::from_csv_reader("t,theta\n0,0\n1,2\n2,1.5\n".as_bytes(), "mem").unwrap();
        assert!(!w.validate(100).unwrap().validated);
    }

    proptest! {
        #[test]
        fn inverse_round_trips(t in 0.0f64..10.0) {
            for w in builtins(0.0, 10.0) {
                let back = w.theta_inverse(w.theta(t).unwrap()).unwrap();
                prop_assert!((back - t).abs() <= 1e-9, "{:?}: {back} vs {t}", w.kind());
                let v = w.theta(t).unwrap();
                prop_assert!((w.theta(back).unwrap() - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn derivative_matches_central_differences(t in 0.01f64..9.99) {
            for w in builtins(0.0, 10.0) {
                let h = 1e-6;
                let fd = (w.theta(t + h).unwrap() - w.theta(t - h).unwrap()) / (2.0 * h);
                let exact = w.theta_dot(t).unwrap();
                prop_assert!(((fd - exact) / exact).abs() <= 1e-5);
            }
        }

        #[test]
        fn builtins_validate_on_any_subinterval(a in 0.0f64..50.0, len in 1e-3f64..50.0) {
            for mut w in builtins(a, a + len) {
                prop_assert!(w.validate(257).unwrap().validated);
            }
        }
    }

    #[test]
    fn inverse_round_trip_thousand_draws_per_kind() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let table = Warping::tabulated(vec![0.0, 1.0, 3.0, 10.0], vec![0.0, 0.5, 4.0, 5.0]).unwrap();
        let mut all = builtins(0.0, 10.0);
        all.push(table);
        for w in all {
            for _ in 0..1000 {
                let t: f64 = rng.gen_range(0.0..10.0);
                let back = w.theta_inverse(w.theta(t).unwrap()).unwrap();
                assert!((back - t).abs() <= 1e-9, "{:?}", w.kind());
            }
        }
    }
}
