//! Benchmark configuration, λ tuning, trial execution and CSV/JSON reports.
//!
//! A config file is flat `key = value` text. List values are comma-separated,
//! `#` starts a comment, and unknown keys are rejected:
//!
//! ```text
//! n = 1024
//! m = 500
//! d = 4096
//! distribution = gaussian
//! sparsity_pcts = 1, 2, 3, 4, 5
//! snr_dbs = 50
//! algorithms = ista, loris, nesta, sfista
//! fidelities = ls, tf, rtf
//! n_trials = 100
//! master_seed = 2024
//! lambda_policy = grid_tuned
//! output_dir = out/snr50
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::{generate_sensing, leading_dct, overcomplete_dct, Distribution, Fidelity};
use crate::rng::derive_seed;
use crate::signalgen::{instance, trial_seed, ProblemInstance};
use crate::solvers::{method_label, solve_instance, Algorithm, SolverSpec, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::{SensingOperator, TightDictionary};

const TAG_SENSING: u64 = 0x7365_6e73;
const TAG_DICT: u64 = 0x6469_6374;
const TAG_REPORTING: u64 = 0x7265_706f;
const TAG_VALIDATION: u64 = 0x7661_6c69;

pub const THREADS_ENV: &str = "TFSR_THREADS";
pub const CSV_HEADER: [&str; 10] = [
    "method",
    "fidelity",
    "sparsity_pct",
    "snr_db",
    "mean_rsnr_db",
    "std_rsnr_db",
    "lambda",
    "n_trials",
    "config_hash",
    "status",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed { lambda: f64 },
    GridTuned,
}

/// How the `n` dictionary rows are taken from the `d×d` DCT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowRule {
    Random,
    Leading,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub distribution: Distribution,
    pub dictionary: RowRule,
    pub sparsity_pcts: Vec<f64>,
    pub snr_dbs: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub fidelities: Vec<Fidelity>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub lambda_policy: LambdaPolicy,
    pub lambda_grid: LambdaGrid,
    pub validation_trials: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub output_dir: PathBuf,
    /// Thread cap; `None` or 0 defers to `TFSR_THREADS`, then to all cores.
    pub threads: Option<usize>,
}

/// `points` log-spaced values on `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            min: 1e-4,
            max: 1.0,
            points: 20,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    self.min
                } else if i + 1 == self.points {
                    self.max
                } else {
                    (a + (b - a) * i as f64 / (self.points - 1) as f64).exp()
                }
            })
            .collect()
    }
}

impl BenchConfig {
    /// The full-size geometry with every method and the default tuning.
    pub fn full_scale(sparsity_pcts: Vec<f64>, snr_dbs: Vec<f64>, output_dir: PathBuf) -> Self {
        BenchConfig {
            n: 1024,
            m: 500,
            d: 4096,
            distribution: Distribution::Gaussian,
            dictionary: RowRule::Random,
            sparsity_pcts,
            snr_dbs,
            algorithms: Algorithm::ALL.to_vec(),
            fidelities: Fidelity::ALL.to_vec(),
            n_trials: 100,
            master_seed: 2024,
            lambda_policy: LambdaPolicy::GridTuned,
            lambda_grid: LambdaGrid::default(),
            validation_trials: 10,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            output_dir,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.d >= self.n && self.n > self.m && self.m >= 1) {
            return bad(format!(
                "need d >= n > m >= 1, got d={}, n={}, m={}",
                self.d, self.n, self.m
            ));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.sparsity_pcts.is_empty() || self.snr_dbs.is_empty() {
            return bad("sparsity_pcts and snr_dbs must be non-empty".into());
        }
        if let Some(p) = self.sparsity_pcts.iter().find(|p| !(**p > 0.0 && **p <= 100.0)) {
            return bad(format!("sparsity {p} outside (0, 100]"));
        }
        if let Some(s) = self.snr_dbs.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return bad(format!("invalid snr {s}"));
        }
        if self.algorithms.is_empty() || self.fidelities.is_empty() {
            return bad("algorithms and fidelities must be non-empty".into());
        }
        if let LambdaPolicy::Fixed { lambda } = self.lambda_policy {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return bad(format!("lambda must be positive, got {lambda}"));
            }
        }
        let g = &self.lambda_grid;
        if !(g.min > 0.0 && g.max >= g.min && g.points >= 1 && g.max.is_finite()) {
            return bad(format!("invalid lambda grid [{}, {}] x {}", g.min, g.max, g.points));
        }
        if self.lambda_policy == LambdaPolicy::GridTuned && self.validation_trials == 0 {
            return bad("validation_trials must be at least 1 for grid tuning".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        let mut cfg = BenchConfig::full_scale(vec![], vec![], PathBuf::from("bench_out"));
        let mut lambda = None;
        let mut policy = None;
        for (k, v) in &kv {
            let ctx = |e: String| Error::Config(format!("{k}: {e}"));
            match k.as_str() {
                "n" => cfg.n = scalar(v).map_err(ctx)?,
                "m" => cfg.m = scalar(v).map_err(ctx)?,
                "d" => cfg.d = scalar(v).map_err(ctx)?,
                "distribution" => cfg.distribution = v.parse().map_err(|e: Error| ctx(e.to_string()))?,
                "dictionary" => {
                    cfg.dictionary = match v.as_str() {
                        "random" => RowRule::Random,
                        "leading" => RowRule::Leading,
                        other => return Err(ctx(format!("unknown row rule '{other}'"))),
                    }
                }
                "sparsity_pcts" => cfg.sparsity_pcts = list(v).map_err(ctx)?,
                "snr_dbs" => cfg.snr_dbs = list(v).map_err(ctx)?,
                "algorithms" => cfg.algorithms = list_or_all(v, &Algorithm::ALL).map_err(ctx)?,
                "fidelities" => cfg.fidelities = list_or_all(v, &Fidelity::ALL).map_err(ctx)?,
                "n_trials" => cfg.n_trials = scalar(v).map_err(ctx)?,
                "master_seed" => cfg.master_seed = scalar(v).map_err(ctx)?,
                "lambda_policy" => policy = Some(v.clone()),
                "lambda" => lambda = Some(scalar::<f64>(v).map_err(ctx)?),
                "lambda_min" => cfg.lambda_grid.min = scalar(v).map_err(ctx)?,
                "lambda_max" => cfg.lambda_grid.max = scalar(v).map_err(ctx)?,
                "lambda_points" => cfg.lambda_grid.points = scalar(v).map_err(ctx)?,
                "validation_trials" => cfg.validation_trials = scalar(v).map_err(ctx)?,
                "max_iters" => cfg.max_iters = scalar(v).map_err(ctx)?,
                "tol" => cfg.tol = scalar(v).map_err(ctx)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "threads" => cfg.threads = Some(scalar(v).map_err(ctx)?),
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        cfg.lambda_policy = match (policy.as_deref(), lambda) {
            (None | Some("grid_tuned"), None) => LambdaPolicy::GridTuned,
            (None | Some("fixed"), Some(lambda)) => LambdaPolicy::Fixed { lambda },
            (Some("fixed"), None) => return Err(Error::Config("lambda_policy = fixed needs lambda".into())),
            (Some("grid_tuned"), Some(_)) => {
                return Err(Error::Config("lambda is only allowed with lambda_policy = fixed".into()))
            }
            (Some(other), _) => return Err(Error::Config(format!("unknown lambda_policy '{other}'"))),
        };
        for key in ["sparsity_pcts", "snr_dbs"] {
            if !kv.contains_key(key) {
                return Err(Error::Config(format!("missing required key '{key}'")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_text(path)?)
    }

    /// SHA-256 (first 16 hex digits) of every setting that affects results;
    /// `output_dir` and `threads` are excluded.
    pub fn hash(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "n={};m={};d={};dist={};dict={:?};sp={:?};snr={:?};alg={:?};fid={:?};trials={};seed={};policy={:?};grid={:?};val={};iters={};tol={:?}",
            self.n,
            self.m,
            self.d,
            self.distribution,
            self.dictionary,
            self.sparsity_pcts,
            self.snr_dbs,
            self.algorithms,
            self.fidelities,
            self.n_trials,
            self.master_seed,
            self.lambda_policy,
            self.lambda_grid,
            self.validation_trials,
            self.max_iters,
            self.tol,
        );
        let digest = Sha256::digest(s.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn methods(&self) -> Vec<(Algorithm, Fidelity)> {
        self.algorithms
            .iter()
            .flat_map(|&a| self.fidelities.iter().map(move |&f| (a, f)))
            .collect()
    }

    pub fn reporting_seeds(&self) -> Vec<u64> {
        let base = derive_seed(self.master_seed, TAG_REPORTING, 0);
        (0..self.n_trials as u64).map(|i| trial_seed(base, i)).collect()
    }

    pub fn validation_seeds(&self) -> Vec<u64> {
        let base = derive_seed(self.master_seed, TAG_VALIDATION, 0);
        (0..self.validation_trials as u64).map(|i| trial_seed(base, i)).collect()
    }

    /// The sensing operator and dictionary shared by every cell.
    pub fn build_problem(&self) -> Result<(SensingOperator, TightDictionary)> {
        let op = generate_sensing(
            self.m,
            self.n,
            self.distribution,
            derive_seed(self.master_seed, TAG_SENSING, 0),
        )?;
        let dict = match self.dictionary {
            RowRule::Random => overcomplete_dct(self.n, self.d, derive_seed(self.master_seed, TAG_DICT, 0))?,
            RowRule::Leading => leading_dct(self.n, self.d)?,
        };
        Ok((op, dict))
    }

    pub fn spec(&self, algorithm: Algorithm, fidelity: Fidelity, lambda: f64) -> SolverSpec {
        SolverSpec::new(algorithm, fidelity, lambda)
            .with_max_iters(self.max_iters)
            .with_tol(self.tol)
    }
}

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(scalar).collect()
}

fn list_or_all<T: FromStr + Copy>(v: &str, all: &[T]) -> std::result::Result<Vec<T>, String> {
    if v.trim() == "all" {
        Ok(all.to_vec())
    } else {
        list(v)
    }
}

/// Thread cap from the config, then `TFSR_THREADS`; 0 means all cores.
pub fn resolve_threads(configured: Option<usize>) -> Result<usize> {
    if let Some(t) = configured.filter(|t| *t > 0) {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

/// Runs `f` inside a rayon pool capped at `threads` (0 = all cores).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Mean and sample standard deviation, accumulated in slice order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { f64::NAN });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// RSNR of `spec` on each instance, in instance order.
pub fn run_trials(
    spec: &SolverSpec,
    op: &SensingOperator,
    dict: &TightDictionary,
    instances: &[ProblemInstance],
) -> Result<Vec<f64>> {
    instances
        .par_iter()
        .map(|inst| {
            let res = solve_instance(spec, op, dict, inst)?;
            Ok(res.rsnr_db.expect("solve_instance sets the RSNR"))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunePoint {
    pub lambda: f64,
    /// `None` when some validation run diverged.
    pub mean_rsnr_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambda: f64,
    pub curve: Vec<TunePoint>,
}

/// Picks the λ with the highest mean validation RSNR; ties go to the larger
/// λ. Diverged grid points are skipped.
pub fn tune_lambda(
    template: &SolverSpec,
    op: &SensingOperator,
    dict: &TightDictionary,
    grid: &[f64],
    validation: &[ProblemInstance],
) -> Result<TuneResult> {
    if grid.is_empty() || validation.is_empty() {
        return Err(Error::InvalidParameter("tuning needs a grid and validation instances".into()));
    }
    let curve: Vec<TunePoint> = grid
        .iter()
        .map(|&lambda| {
            let mut spec = template.clone();
            spec.lambda = lambda;
            let mean = match run_trials(&spec, op, dict, validation) {
                Ok(r) => Some(mean_std(&r).0),
                Err(Error::Divergence { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(TunePoint {
                lambda,
                mean_rsnr_db: mean,
            })
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, f64)> = None;
    for p in &curve {
        if let Some(v) = p.mean_rsnr_db.filter(|v| !v.is_nan()) {
            let better = match best {
                None => true,
                Some((bl, bv)) => v > bv || (v == bv && p.lambda > bl),
            };
            if better {
                best = Some((p.lambda, v));
            }
        }
    }
    match best {
        Some((lambda, _)) => Ok(TuneResult { lambda, curve }),
        None => Err(Error::AllDiverged),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub algorithm: Algorithm,
    pub fidelity: Fidelity,
    pub sparsity_pct: f64,
    pub snr_db: f64,
    pub mean_rsnr_db: f64,
    pub std_rsnr_db: f64,
    pub lambda: Option<f64>,
    pub n_trials: usize,
    /// `ok`, or `failed: <diagnostic>`.
    pub status: String,
    pub rsnr_db: Vec<f64>,
    pub tuning: Option<Vec<TunePoint>>,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config_hash: String,
    pub config: BenchConfig,
    pub spec_norm_sq: f64,
    pub reporting_seeds: Vec<u64>,
    pub validation_seeds: Vec<u64>,
    pub cells: Vec<CellResult>,
    pub runtime_secs: f64,
}

impl BenchReport {
    pub fn cell(&self, algorithm: Algorithm, fidelity: Fidelity, sparsity_pct: f64, snr_db: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.algorithm == algorithm && c.fidelity == fidelity && c.sparsity_pct == sparsity_pct && c.snr_db == snr_db
        })
    }
}

fn instances(
    op: &SensingOperator,
    dict: &TightDictionary,
    pct: f64,
    snr: f64,
    seeds: &[u64],
) -> Result<Vec<ProblemInstance>> {
    seeds.par_iter().map(|&s| instance(op, dict, pct, snr, s)).collect()
}

/// Runs every (sparsity, SNR, algorithm, fidelity) cell. A diverging cell is
/// marked failed and the run continues. Does not write files.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let threads = resolve_threads(config.threads)?;
    with_threads(threads, || run_benchmark_inner(config))?
}

fn run_benchmark_inner(config: &BenchConfig) -> Result<BenchReport> {
    let start = Instant::now();
    let (op, dict) = config.build_problem()?;
    let reporting_seeds = config.reporting_seeds();
    let validation_seeds = match config.lambda_policy {
        LambdaPolicy::GridTuned => config.validation_seeds(),
        LambdaPolicy::Fixed { .. } => vec![],
    };
    if validation_seeds.iter().any(|s| reporting_seeds.contains(s)) {
        return Err(Error::Config("validation and reporting seeds collide; change master_seed".into()));
    }
    let grid = config.lambda_grid.values();
    let mut cells = Vec::new();
    for &pct in &config.sparsity_pcts {
        for &snr in &config.snr_dbs {
            let report_set = instances(&op, &dict, pct, snr, &reporting_seeds)?;
            let valid_set = instances(&op, &dict, pct, snr, &validation_seeds)?;
            for (algorithm, fidelity) in config.methods() {
                cells.push(run_cell(config, &op, &dict, algorithm, fidelity, pct, snr, &grid, &valid_set, &report_set)?);
            }
        }
    }
    Ok(BenchReport {
        config_hash: config.hash(),
        config: config.clone(),
        spec_norm_sq: op.spec_norm_sq(),
        reporting_seeds,
        validation_seeds,
        cells,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    config: &BenchConfig,
    op: &SensingOperator,
    dict: &TightDictionary,
    algorithm: Algorithm,
    fidelity: Fidelity,
    pct: f64,
    snr: f64,
    grid: &[f64],
    validation: &[ProblemInstance],
    reporting: &[ProblemInstance],
) -> Result<CellResult> {
    let mut cell = CellResult {
        method: method_label(algorithm, fidelity),
        algorithm,
        fidelity,
        sparsity_pct: pct,
        snr_db: snr,
        mean_rsnr_db: f64::NAN,
        std_rsnr_db: f64::NAN,
        lambda: None,
        n_trials: reporting.len(),
        status: "ok".into(),
        rsnr_db: vec![],
        tuning: None,
    };
    let template = config.spec(algorithm, fidelity, grid[0]);
    let lambda = match config.lambda_policy {
        LambdaPolicy::Fixed { lambda } => lambda,
        LambdaPolicy::GridTuned => match tune_lambda(&template, op, dict, grid, validation) {
            Ok(t) => {
                cell.tuning = Some(t.curve);
                t.lambda
            }
            Err(e @ Error::AllDiverged) => {
                cell.status = format!("failed: {e}");
                return Ok(cell);
            }
            Err(e) => return Err(e),
        },
    };
    cell.lambda = Some(lambda);
    let spec = config.spec(algorithm, fidelity, lambda);
    match run_trials(&spec, op, dict, reporting) {
        Ok(r) => {
            let (mean, std) = mean_std(&r);
            cell.mean_rsnr_db = mean;
            cell.std_rsnr_db = std;
            cell.rsnr_db = r;
        }
        Err(e @ Error::Divergence { .. }) => cell.status = format!("failed: {e}"),
        Err(e) => return Err(e),
    }
    Ok(cell)
}

/// Float formatting for CSV: shortest round-trip decimal, with `inf`,
/// `-inf` and `nan` spelled out.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

/// One CSV row with every field pre-formatted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub fidelity: String,
    pub sparsity_pct: String,
    pub snr_db: String,
    pub mean_rsnr_db: String,
    pub std_rsnr_db: String,
    pub lambda: String,
    pub n_trials: String,
    pub config_hash: String,
    pub status: String,
}

impl BenchReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.cells
            .iter()
            .map(|c| CsvRow {
                method: c.method.clone(),
                fidelity: c.fidelity.name().into(),
                sparsity_pct: fmt_float(c.sparsity_pct),
                snr_db: fmt_float(c.snr_db),
                mean_rsnr_db: fmt_float(c.mean_rsnr_db),
                std_rsnr_db: fmt_float(c.std_rsnr_db),
                lambda: c.lambda.map(fmt_float).unwrap_or_default(),
                n_trials: c.n_trials.to_string(),
                config_hash: self.config_hash.clone(),
                status: c.status.clone(),
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.csv_rows())
    }

    /// Writes `results.csv` and `report.json` into the configured output
    /// directory and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join("results.csv");
        let json_path = dir.join("report.json");
        fs::write(&csv_path, self.to_csv()?)?;
        fs::write(&json_path, serde_json::to_string_pretty(self)?)?;
        Ok((csv_path, json_path))
    }
}

pub fn rows_to_csv(rows: &[CsvRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(vec![]);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Concatenates report rows, refusing rows whose config hashes differ.
pub fn merge_reports(texts: &[String]) -> Result<String> {
    let mut rows = Vec::new();
    let mut hash: Option<String> = None;
    for t in texts {
        for row in read_csv(t)? {
            match &hash {
                None => hash = Some(row.config_hash.clone()),
                Some(h) if *h != row.config_hash => {
                    return Err(Error::HashMismatch(h.clone(), row.config_hash));
                }
                Some(_) => {}
            }
            rows.push(row);
        }
    }
    rows_to_csv(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
        # tiny geometry
        n = 32
        m = 16
        d = 64
        distribution = bernoulli
        sparsity_pcts = 2, 4
        snr_dbs = 30, inf
        algorithms = ista, loris
        fidelities = all
        n_trials = 3
        master_seed = 7
        lambda = 0.01
        max_iters = 50
        output_dir = /tmp/x
    ";

    #[test]
    fn parses_flat_config() {
        let c = BenchConfig::parse(SMALL).unwrap();
        assert_eq!((c.n, c.m, c.d), (32, 16, 64));
        assert_eq!(c.distribution, Distribution::Bernoulli);
        assert_eq!(c.sparsity_pcts, vec![2.0, 4.0]);
        assert_eq!(c.snr_dbs, vec![30.0, f64::INFINITY]);
        assert_eq!(c.methods().len(), 6);
        assert_eq!(c.lambda_policy, LambdaPolicy::Fixed { lambda: 0.01 });
        assert_eq!(c.max_iters, 50);
        assert_eq!(c.tol, DEFAULT_TOL);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "n = 10\nm = 20\nd = 40\nsparsity_pcts = 1\nsnr_dbs = 20",
            "sparsity_pcts = 1\nsnr_dbs = 20\nbogus = 1",
            "sparsity_pcts = 1\nsnr_dbs = 20\nn_trials = 0",
            "sparsity_pcts = 1\nsnr_dbs = 20\nlambda_policy = fixed",
            "sparsity_pcts = 1\nsnr_dbs = 20\nn = x",
            "sparsity_pcts = 1\nsnr_dbs = 20\nn = 4\nn = 5",
            "snr_dbs = 20",
            "sparsity_pcts = 1\nsnr_dbs = 20\nalgorithms = ista, fista",
            "sparsity_pcts = 1\nsnr_dbs = 20\njust text",
        ] {
            assert!(matches!(BenchConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_output_and_threads_only() {
        let a = BenchConfig::parse(SMALL).unwrap();
        let mut b = a.clone();
        b.output_dir = "/elsewhere".into();
        b.threads = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.master_seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn lambda_grid_is_log_spaced() {
        let g = LambdaGrid::default().values();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[19], 1.0);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-9);
        }
        let single = LambdaGrid { min: 0.3, max: 0.3, points: 1 };
        assert_eq!(single.values(), vec![0.3]);
    }

    #[test]
    fn seed_sets_are_disjoint() {
        let c = BenchConfig::parse(SMALL).unwrap();
        let mut c = c;
        c.n_trials = 100;
        let r = c.reporting_seeds();
        let v = c.validation_seeds();
        assert_eq!(v.len(), 10);
        assert!(v.iter().all(|s| !r.contains(s)));
    }

    #[test]
    fn mean_std_reference() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
        let (m, s) = mean_std(&[1.0, f64::INFINITY]);
        assert_eq!(m, f64::INFINITY);
        assert!(s.is_nan());
    }

    #[test]
    fn csv_round_trip_and_merge() {
        let row = |h: &str| CsvRow {
            method: "TF-ISTA".into(),
            fidelity: "tf".into(),
            sparsity_pct: "1".into(),
            snr_db: "inf".into(),
            mean_rsnr_db: "inf".into(),
            std_rsnr_db: "nan".into(),
            lambda: "0.01".into(),
            n_trials: "3".into(),
            config_hash: h.into(),
            status: "ok".into(),
        };
        let a = rows_to_csv(&[row("aa")]).unwrap();
        assert!(a.starts_with("method,fidelity,sparsity_pct,snr_db,mean_rsnr_db,std_rsnr_db,lambda,n_trials,config_hash,status\n"));
        assert_eq!(read_csv(&a).unwrap(), vec![row("aa")]);
        let merged = merge_reports(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(read_csv(&merged).unwrap().len(), 2);
        let b = rows_to_csv(&[row("bb")]).unwrap();
        assert!(matches!(merge_reports(&[a, b]), Err(Error::HashMismatch(..))));
        assert!(read_csv("x,y\n1,2\n").is_err());
    }

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(f64::NAN), "nan");
        assert_eq!(fmt_float(0.1), "0.1");
        assert_eq!(fmt_float(41.0), "41");
    }
}
