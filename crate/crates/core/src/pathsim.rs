//! Exact sampling of the modulated process on a grid and Monte Carlo
//! estimates of its zero count.
//!
//! Path `p` draws its standard normals from the ChaCha8 stream `p` of the
//! run seed, so every path is a pure function of `(seed, p)` and the output
//! does not depend on how work is split across threads. Paths are formed in
//! fixed-size chunks as `L·Z` with `L` the jittered Cholesky factor.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::modkernel::{gram, JitterPolicy};
use crate::warp::Warping;

const CHUNK: usize = 256;

/// Sampled paths, one row per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub seed: u64,
    pub nodes: Vec<f64>,
    pub jitter_applied: f64,
    pub paths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleMetadata<'a> {
    pub seed: u64,
    pub n_paths: usize,
    pub n_nodes: usize,
    pub interval: (f64, f64),
    pub jitter_applied: f64,
    pub kernel: &'a KernelSpec,
    pub warping: &'a Warping,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn metadata<'a>(&self, kernel: &'a KernelSpec, warping: &'a Warping) -> EnsembleMetadata<'a> {
        EnsembleMetadata {
            seed: self.seed,
            n_paths: self.paths.len(),
            n_nodes: self.nodes.len(),
            interval: (self.nodes[0], self.nodes[self.nodes.len() - 1]),
            jitter_applied: self.jitter_applied,
            kernel,
            warping,
        }
    }

    /// One CSV row per path; the header lists the node times.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["path".to_string()];
        header.extend(self.nodes.iter().map(|t| format!("{t}")));
        wtr.write_record(&header)?;
        for (p, path) in self.paths.iter().enumerate() {
            let mut row = vec![p.to_string()];
            row.extend(path.iter().map(|x| format!("{x}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

// Columns are paths `start..start + count`.
fn draw_chunk(chol: &DMatrix<f64>, seed: u64, start: usize, count: usize) -> DMatrix<f64> {
    let n = chol.nrows();
    let mut z = DMatrix::zeros(n, count);
    for c in 0..count {
        let mut rng = path_rng(seed, start + c);
        for i in 0..n {
            z[(i, c)] = StandardNormal.sample(&mut rng);
        }
    }
    chol * z
}

fn chunk_starts(n_paths: usize) -> Vec<(usize, usize)> {
    (0..n_paths)
        .step_by(CHUNK)
        .map(|s| (s, CHUNK.min(n_paths - s)))
        .collect()
}

/// Draws `n_paths` paths of the centered process with covariance `K_θ` at
/// `nodes`.
pub fn sample_paths(
    k: &KernelSpec,
    w: &Warping,
    nodes: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::Argument("n_paths must be at least 1".into()));
    }
    let g = gram(k, w, nodes, &JitterPolicy::default())?;
    let chunks: Vec<DMatrix<f64>> = chunk_starts(n_paths)
        .into_par_iter()
        .map(|(start, count)| draw_chunk(&g.cholesky, seed, start, count))
        .collect();
    let paths = chunks
        .iter()
        .flat_map(|m| m.column_iter().map(|c| c.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
        .collect();
    Ok(PathEnsemble {
        seed,
        nodes: nodes.to_vec(),
        jitter_applied: g.jitter_applied,
        paths,
    })
}

/// Sign changes along a sampled path.
///
/// A run of exact zeros counts as one crossing, and the sign comparison
/// resumes at the next nonzero sample.
pub fn count_zeros(samples: &[f64]) -> usize {
    let mut count = 0;
    let mut last_positive: Option<bool> = None;
    let mut in_zero_run = false;
    for &x in samples {
        if x == 0.0 {
            if !in_zero_run {
                count += 1;
                in_zero_run = true;
            }
            continue;
        }
        let positive = x > 0.0;
        if in_zero_run {
            in_zero_run = false;
        } else if let Some(prev) = last_positive {
            if prev != positive {
                count += 1;
            }
        }
        last_positive = Some(positive);
    }
    count
}

/// Nodes on `[0, T]` equispaced in warped time, `ceil(density·(θ(T) − θ(0)))`
/// intervals, with both endpoints exact.
pub fn warped_uniform_nodes(w: &Warping, horizon: f64, density: f64) -> Result<Vec<f64>> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::Argument(format!("grid density must be > 0, got {density}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Argument(format!("horizon must be > 0, got {horizon}")));
    }
    let (v0, v1) = (w.theta(0.0)?, w.theta(horizon)?);
    let span = v1 - v0;
    let intervals = ((density * span).ceil() as usize).max(1);
    let mut nodes = Vec::with_capacity(intervals + 1);
    nodes.push(0.0);
    for i in 1..intervals {
        nodes.push(w.theta_inverse(v0 + span * i as f64 / intervals as f64)?);
    }
    nodes.push(horizon);
    if nodes.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Argument(format!(
            "density {density} is too fine to resolve distinct nodes"
        )));
    }
    Ok(nodes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroCountEstimate {
    pub mean: f64,
    /// Standard error of the mean; absent for a single path.
    pub std_error: Option<f64>,
    pub n_paths: usize,
    pub n_nodes: usize,
    pub jitter_applied: f64,
}

/// Monte Carlo estimate of `E[N([0, T])]` from sign changes on a grid with
/// `density` nodes per unit of warped time.
pub fn mc_expected_zeros(
    k: &KernelSpec,
    w: &Warping,
    horizon: f64,
    density: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ZeroCountEstimate> {
    if n_paths == 0 {
        return Err(Error::Argument("n_paths must be at least 1".into()));
    }
    if horizon == 0.0 {
        return Ok(ZeroCountEstimate {
            mean: 0.0,
            std_error: (n_paths > 1).then_some(0.0),
            n_paths,
            n_nodes: 1,
            jitter_applied: 0.0,
        });
    }
    let nodes = warped_uniform_nodes(w, horizon, density)?;
    let g = gram(k, w, &nodes, &JitterPolicy::default())?;
    let counts: Vec<usize> = chunk_starts(n_paths)
        .into_par_iter()
        .flat_map_iter(|(start, count)| {
            let block = draw_chunk(&g.cholesky, seed, start, count);
            (0..count)
                .map(|c| count_zeros(block.column(c).as_slice()))
                .collect::<Vec<_>>()
        })
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let std_error = (counts.len() > 1).then(|| {
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    Ok(ZeroCountEstimate {
        mean,
        std_error,
        n_paths,
        n_nodes: nodes.len(),
        jitter_applied: g.jitter_applied,
    })
}
