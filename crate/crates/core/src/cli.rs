//! Config-driven experiments: `validate`, `eigen` and `zeros`.
//!
//! A run reads one JSON [`ExperimentConfig`], resolves defaults, and writes
//! JSON and CSV reports that embed the resolved config. Reports contain no
//! timestamps or host details, so identical configs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::pathsim::{sample_paths, warped_uniform_nodes};
use crate::quadrature::GridSpec;
use crate::spectral::{
    check_conjugation, check_eigenvalue_invariance, check_transport_eigenfunctions, default_test_functions,
    ConjugationReport, InvarianceReport, Measure, TransportReport,
};
use crate::warp::{ValidationReport, Warping};
use crate::zeros::{compare, McConfig, ZeroCountReport};

/// Probe count used by `validate`.
pub const VALIDATION_PROBES: usize = 10_000;

/// Built-in warping shapes, or a path to a `t,theta` CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpShape {
    Identity,
    Affine { a: f64, b: f64 },
    SoftShift,
    ExpApproach,
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpingConfig {
    #[serde(flatten)]
    pub shape: WarpShape,
    /// Working domain; defaults to the smallest interval covering the
    /// eigen interval, `[0, horizon]`, or the tabulated range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_density")]
    pub density: f64,
    /// Also write every sampled path to `paths.csv`.
    #[serde(default)]
    pub dump_paths: bool,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            seed: 0,
            density: default_density(),
            dump_paths: false,
        }
    }
}

fn default_paths() -> usize {
    10_000
}
fn default_density() -> f64 {
    50.0
}
fn default_modes() -> usize {
    10
}
fn default_grid() -> GridSpec {
    GridSpec::gauss_legendre(400)
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// One experiment. Every field except `kernel` and `warping` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub warping: WarpingConfig,
    /// `[a, b]` for the spectral checks.
    #[serde(default)]
    pub interval: Option<(f64, f64)>,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// `T` for zero counting on `[0, T]`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json_str(&text, &path.display().to_string())?;
        if let WarpShape::Tabulated { path: table } = &mut config.warping.shape {
            if table.is_relative() {
                if let Some(dir) = path.parent() {
                    *table = dir.join(&*table);
                }
            }
        }
        Ok(config)
    }

    fn default_domain(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        if let Some((a, b)) = self.interval {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if let Some(t) = self.horizon {
            lo = lo.min(0.0);
            hi = hi.max(t);
        }
        if lo.is_finite() && hi.is_finite() {
            Ok((lo, hi))
        } else {
            Err(Error::Config(
                "warping.domain is required when neither interval nor horizon is set".into(),
            ))
        }
    }

    /// Builds the warping described by the config (not yet validated).
    pub fn build_warping(&self) -> Result<Warping> {
        let config_err = |e: Error| Error::Config(format!("warping: {e}"));
        match &self.warping.shape {
            WarpShape::Tabulated { path } => {
                let table = Warping::from_csv_path(path)?;
                match self.warping.domain {
                    Some((lo, hi)) => table.with_domain(lo, hi).map_err(config_err),
                    None => Ok(table),
                }
            }
            shape => {
                let (lo, hi) = match self.warping.domain {
                    Some(d) => d,
                    None => self.default_domain()?,
                };
                match shape {
                    WarpShape::Identity => Warping::identity(lo, hi),
                    WarpShape::Affine { a, b } => Warping::affine(*a, *b, lo, hi),
                    WarpShape::SoftShift => Warping::soft_shift(lo, hi),
                    WarpShape::ExpApproach => Warping::exp_approach(lo, hi),
                    WarpShape::Tabulated { .. } => unreachable!(),
                }
                .map_err(config_err)
            }
        }
    }
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub overwrite: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Eigen,
    Zeros,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Eigen => "eigen",
            Command::Zeros => "zeros",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Exit status for an error: 2 for usage and config problems, 1 for
/// domain and validation failures.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Argument(_)
        | Error::Json(_)
        | Error::Parse { .. }
        | Error::Csv(_)
        | Error::Io(_)
        | Error::InvalidParameter(_) => 2,
        Error::Domain(_)
        | Error::NotTwiceDifferentiable(_)
        | Error::JitterExceeded { .. }
        | Error::Quadrature { .. }
        | Error::NotValidated => 1,
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config: &'a ExperimentConfig,
    report: T,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(base: &Path, command: Command, overwrite: bool) -> Result<Self> {
        let dir = if overwrite {
            base.to_path_buf()
        } else {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            let mut dir = base.join(format!("{}-{stamp}", command.name()));
            let mut n = 1;
            while dir.exists() {
                dir = base.join(format!("{}-{stamp}-{n}", command.name()));
                n += 1;
            }
            dir
        };
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, command: Command, config: &ExperimentConfig, report: T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&Envelope {
            command: command.name(),
            config,
            report,
        })?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Loads the config, applies overrides, and runs one subcommand.
///
/// Errors before any report is written are returned as `Err`; a failed
/// warping validation writes its report and returns exit code 1.
pub fn run(command: Command, opts: &RunOptions) -> Result<RunOutcome> {
    let mut config = ExperimentConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        config.mc.seed = seed;
    }
    if let Some(out) = &opts.out {
        config.output_dir = out.clone();
    }
    run_config(command, &config, opts.overwrite)
}

/// Runs a subcommand on an already-resolved config.
pub fn run_config(command: Command, config: &ExperimentConfig, overwrite: bool) -> Result<RunOutcome> {
    let mut warping = config.build_warping()?;
    // Check arguments before touching the filesystem.
    match command {
        Command::Validate => {}
        Command::Eigen => {
            let (a, b) = config
                .interval
                .ok_or_else(|| Error::Config("`interval` is required for eigen".into()))?;
            if !(a < b) {
                return Err(Error::Config(format!("interval must satisfy a < b, got [{a}, {b}]")));
            }
            if config.modes == 0 || config.modes > config.grid.size {
                return Err(Error::Argument(format!(
                    "modes = {} must be between 1 and the grid size {}",
                    config.modes, config.grid.size
                )));
            }
        }
        Command::Zeros => {
            config
                .horizon
                .ok_or_else(|| Error::Config("`horizon` is required for zeros".into()))?;
            config.kernel.spectral_moment()?;
        }
    }

    let validation = warping.validate(VALIDATION_PROBES)?;
    let mut out = Output::create(&config.output_dir, command, overwrite)?;
    let mut summary = Vec::new();
    if command == Command::Validate || !validation.validated {
        out.json("validation.json", command, config, &validation)?;
        summary.push(validation_line(&validation));
        if !validation.validated {
            return Ok(RunOutcome {
                exit_code: 1,
                output_dir: out.dir,
                files: out.files,
                summary,
            });
        }
    }

    match command {
        Command::Validate => {}
        Command::Eigen => run_eigen(config, &warping, &mut out, &mut summary)?,
        Command::Zeros => run_zeros(config, &warping, &mut out, &mut summary)?,
    }
    Ok(RunOutcome {
        exit_code: 0,
        output_dir: out.dir,
        files: out.files,
        summary,
    })
}

fn validation_line(r: &ValidationReport) -> String {
    let mut line = format!(
        "warping on [{}, {}]: monotone={} min θ'={} max θ'={} validated={}",
        r.domain.0, r.domain.1, r.monotone, r.min_derivative, r.max_derivative, r.validated
    );
    for v in &r.violations {
        line.push_str(&format!("\n  violation on segment ({}, {})", v.left, v.right));
    }
    line
}

#[derive(Serialize)]
struct ByMeasure<T> {
    lebesgue: T,
    warped: T,
}

fn pair<T>(mut v: Vec<T>) -> ByMeasure<T> {
    let warped = v.pop().expect("two measures");
    let lebesgue = v.pop().expect("two measures");
    ByMeasure { lebesgue, warped }
}

fn run_eigen(config: &ExperimentConfig, w: &Warping, out: &mut Output, summary: &mut Vec<String>) -> Result<()> {
    let interval = config.interval.expect("checked before");
    let k = &config.kernel;
    let grid = config.grid;
    let n = config.modes;

    let mut invariance = Vec::new();
    let mut transport = Vec::new();
    let mut conjugation = Vec::new();
    for measure in [Measure::Lebesgue, Measure::Warped] {
        invariance.push(check_eigenvalue_invariance(k, w, interval, grid, n, measure)?);
        transport.push(check_transport_eigenfunctions(k, w, interval, grid, n, measure)?);
        let tests = default_test_functions(k, w, interval, grid, measure, config.mc.seed)?;
        conjugation.push(check_conjugation(k, w, interval, grid, &tests, measure)?);
    }
    let invariance = pair(invariance);
    let transport = pair(transport);
    let conjugation = pair(conjugation);

    for (name, r) in [("lebesgue", &invariance.lebesgue), ("warped", &invariance.warped)] {
        summary.push(format!(
            "eigenvalue invariance [{name}]: max relative difference over {} modes = {:.3e}",
            r.relative_differences.len(),
            r.max_relative_difference
        ));
    }
    for (name, r) in [("lebesgue", &transport.lebesgue), ("warped", &transport.warped)] {
        summary.push(format!("eigenfunction transport [{name}]: max error = {:.3e}", r.max_error));
    }
    for (name, r) in [("lebesgue", &conjugation.lebesgue), ("warped", &conjugation.warped)] {
        summary.push(format!("operator conjugation [{name}]: max residual = {:.3e}", r.max_residual));
    }

    out.json("invariance.json", Command::Eigen, config, &invariance)?;
    out.write("invariance.csv", &invariance_csv(&[&invariance.lebesgue, &invariance.warped])?)?;
    out.json("transport.json", Command::Eigen, config, &transport)?;
    out.write("transport.csv", &transport_csv(&[&transport.lebesgue, &transport.warped])?)?;
    out.json("conjugation.json", Command::Eigen, config, &conjugation)?;
    out.write("conjugation.csv", &conjugation_csv(&[&conjugation.lebesgue, &conjugation.warped])?)?;
    Ok(())
}

fn measure_name(m: Measure) -> &'static str {
    match m {
        Measure::Lebesgue => "lebesgue",
        Measure::Warped => "warped",
    }
}

pub fn invariance_csv(reports: &[&InvarianceReport]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["measure", "mode", "modulated_eigenvalue", "stationary_eigenvalue", "relative_difference"])?;
    for r in reports {
        for (i, ((m, s), d)) in r
            .modulated_eigenvalues
            .iter()
            .zip(&r.stationary_eigenvalues)
            .zip(&r.relative_differences)
            .enumerate()
        {
            wtr.write_record([
                measure_name(r.measure).to_string(),
                i.to_string(),
                m.to_string(),
                s.to_string(),
                d.to_string(),
            ])?;
        }
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn transport_csv(reports: &[&TransportReport]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "measure",
        "mode",
        "modulated_eigenvalue",
        "stationary_eigenvalue",
        "error",
        "sign",
        "transported_norm",
        "degenerate",
    ])?;
    for r in reports {
        for m in &r.modes {
            wtr.write_record([
                measure_name(r.measure).to_string(),
                m.mode.to_string(),
                m.modulated_eigenvalue.to_string(),
                m.stationary_eigenvalue.to_string(),
                m.error.to_string(),
                m.sign.to_string(),
                m.transported_norm.to_string(),
                m.degenerate.to_string(),
            ])?;
        }
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn conjugation_csv(reports: &[&ConjugationReport]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["measure", "function", "residual"])?;
    for r in reports {
        for c in &r.residuals {
            wtr.write_record([measure_name(r.measure).to_string(), c.label.clone(), c.residual.to_string()])?;
        }
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn zeros_csv(report: &ZeroCountReport) -> Result<Vec<u8>> {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "horizon",
        "warped_increment",
        "paper_value",
        "quadrature_value",
        "rice_value",
        "mc_mean",
        "mc_std_error",
        "ratio_mc_to_paper",
        "ratio_mc_to_rice",
        "paper_to_rice_factor",
        "mc_n_paths",
        "mc_seed",
        "mc_density",
    ])?;
    wtr.write_record([
        report.horizon.to_string(),
        report.warped_increment.to_string(),
        report.paper_value.to_string(),
        report.quadrature_value.to_string(),
        report.rice_value.to_string(),
        report.mc_mean.to_string(),
        opt(report.mc_std_error),
        opt(report.ratio_mc_to_paper),
        opt(report.ratio_mc_to_rice),
        report.paper_to_rice_factor.to_string(),
        report.mc_n_paths.to_string(),
        report.mc_seed.to_string(),
        report.mc_density.to_string(),
    ])?;
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn run_zeros(config: &ExperimentConfig, w: &Warping, out: &mut Output, summary: &mut Vec<String>) -> Result<()> {
    let horizon = config.horizon.expect("checked before");
    let mc = McConfig {
        n_paths: config.mc.n_paths,
        seed: config.mc.seed,
        density: config.mc.density,
    };
    let report = compare(&config.kernel, w, horizon, &mc)?;
    summary.push(report.summary_line());
    out.json("zeros.json", Command::Zeros, config, &report)?;
    out.write("zeros.csv", &zeros_csv(&report)?)?;

    if config.mc.dump_paths && horizon > 0.0 {
        let nodes = warped_uniform_nodes(w, horizon, mc.density)?;
        let ensemble = sample_paths(&config.kernel, w, &nodes, mc.n_paths, mc.seed)?;
        let mut buf = Vec::new();
        ensemble.write_csv(&mut buf)?;
        out.write("paths.csv", &buf)?;
        let mut meta = serde_json::to_vec_pretty(&ensemble.metadata(&config.kernel, w))?;
        meta.write_all(b"\n")?;
        out.write("paths.json", &meta)?;
    }
    Ok(())
}
