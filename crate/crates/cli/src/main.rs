//! `tfsr`: command-line front end for generation, recovery, benchmarking,
//! restricted isometry estimates and bound constants.
//!
//! Every subcommand prints a JSON document on success. Failures print
//! `{"error": <kind>, "message": <text>}` to stderr and exit with status 1
//! (2 for usage errors).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tfsr_core::bench::{merge_reports, run_benchmark, BenchConfig};
use tfsr_core::bounds::{
    bound_constants, constants_curves, dric_estimate, lemma_checks, optimize_constants, residual_whiteness, ric,
    ric_bnorm, CurveAxis, ErrorSource, Method, NormKind, DEFAULT_ENUMERATION_CAP,
};
use tfsr_core::frames::{generate_sensing, leading_dct, overcomplete_dct};
use tfsr_core::io::{load_dictionary, load_instance, load_operator, read_vector, save_dictionary, save_instance,
    read_text, save_operator, sidecar_path, write_vector};
use tfsr_core::signalgen::instance;
use tfsr_core::solvers::{solve, solve_instance, SolverSpec, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use tfsr_core::{Algorithm, Distribution, Error, Fidelity, TightDictionary};

#[derive(Parser)]
#[command(name = "tfsr", version, about = "Analysis-sparse recovery with a tight-frame data fidelity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a column-normalized random sensing matrix.
    GenMatrix(GenMatrix),
    /// Build a Parseval-tight DCT dictionary.
    GenDict(GenDict),
    /// Recover a signal with one solver.
    Solve(Solve),
    /// Run a benchmark described by a config file.
    Bench(Bench),
    /// Estimate a restricted isometry constant.
    Ric(Ric),
    /// Error-bound constants and property checks.
    Bounds(Bounds),
    /// Whiteness of the B-weighted measurement-domain error.
    Whiteness(Whiteness),
    /// Merge benchmark CSV reports that share a config hash.
    Report(Report),
}

#[derive(Args)]
struct GenMatrix {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "gaussian")]
    dist: Distribution,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rows {
    Random,
    Leading,
}

#[derive(Args)]
struct GenDict {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Rows::Random)]
    rows: Rows,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long = "alg")]
    algorithm: Algorithm,
    #[arg(long)]
    fidelity: Fidelity,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

impl SolverArgs {
    fn spec(&self) -> SolverSpec {
        let mut s = SolverSpec::new(self.algorithm, self.fidelity, self.lambda)
            .with_max_iters(self.max_iters)
            .with_tol(self.tol);
        s.eta = self.eta;
        s.mu = self.mu;
        s.epsilon = self.epsilon;
        s
    }
}

#[derive(Args)]
struct Solve {
    /// Sensing matrix in tfsr-matrix format.
    #[arg(long)]
    operator: PathBuf,
    /// Dictionary JSON; the identity when omitted.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Measurement vector file.
    #[arg(long, conflicts_with_all = ["instance", "sparsity"])]
    y: Option<PathBuf>,
    /// Instance directory written by an earlier `solve --save-instance`.
    #[arg(long, conflicts_with = "sparsity")]
    instance: Option<PathBuf>,
    /// Generate an instance with this sparsity (percent of dictionary atoms).
    #[arg(long)]
    sparsity: Option<f64>,
    /// SNR of the generated instance in dB; `inf` for noiseless.
    #[arg(long, default_value_t = f64::INFINITY, requires = "sparsity")]
    snr: f64,
    #[arg(long, default_value_t = 0, requires = "sparsity")]
    seed: u64,
    /// Write the generated instance to this directory.
    #[arg(long, requires = "sparsity")]
    save_instance: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the estimate as a vector file.
    #[arg(long)]
    x_out: Option<PathBuf>,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include the objective trace and the estimate in the JSON.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Thread cap (0 = all cores); overrides the config and TFSR_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Bnorm,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: f64,
}

impl MethodArgs {
    fn method(&self) -> Method {
        match self.method {
            MethodArg::Exact => Method::ExactEnumeration { cap: self.cap },
            MethodArg::MonteCarlo => Method::MonteCarlo {
                trials: self.trials,
                seed: self.seed,
            },
        }
    }
}

#[derive(Args)]
struct Ric {
    #[arg(long)]
    operator: PathBuf,
    /// Dictionary JSON for the dictionary-adapted constant.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long)]
    s: usize,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    norm: NormArg,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Args)]
struct Bounds {
    #[command(subcommand)]
    command: BoundsCommand,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Delta,
    DeltaHat,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// K1, K2 and the ε / η coefficients at given (c1, c2).
    Constants {
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long = "set-size")]
        m_set: usize,
        #[arg(long)]
        delta_hat: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        c2: f64,
    },
    /// Grid search for the (c1, c2) minimizing the ε coefficient.
    Optimize {
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long = "set-size")]
        m_set: usize,
        #[arg(long)]
        delta_hat: f64,
    },
    /// TF-side constants along a grid of isometry constants.
    Curves {
        #[arg(long)]
        compression: f64,
        /// Comma-separated grid in (0, 1).
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        m_over_s: usize,
        #[arg(long, value_enum, default_value_t = AxisArg::Delta)]
        axis: AxisArg,
        /// Optional CSV with columns delta,c0,c1 to place alongside.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write the curve CSV here (metadata goes to `<out>.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral-norm and isometry-constant lemma checks on an operator.
    Lemma {
        #[arg(long)]
        operator: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Solver,
    Isotropic,
}

#[derive(Args)]
struct Whiteness {
    #[arg(long)]
    operator: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceArg::Solver)]
    source: SourceArg,
    #[arg(long, default_value_t = 1.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 40.0)]
    snr: f64,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "alg", default_value = "ista")]
    algorithm: Algorithm,
    #[arg(long, default_value = "tf")]
    fidelity: Fidelity,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Args)]
struct Report {
    /// CSV reports to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

type CliResult = Result<Value, Error>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = json!({"error": "usage", "message": e.to_string().trim()});
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(v) => {
            // A closed stdout (e.g. piped into `head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).expect("JSON values serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::GenMatrix(a) => gen_matrix(a),
        Command::GenDict(a) => gen_dict(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Ric(a) => ric_cmd(a),
        Command::Bounds(a) => bounds(a.command),
        Command::Whiteness(a) => whiteness(a),
        Command::Report(a) => report(a),
    }
}

fn gen_matrix(a: GenMatrix) -> CliResult {
    let op = generate_sensing(a.m, a.n, a.dist, a.seed)?;
    save_operator(&a.out, &op)?;
    Ok(json!({
        "matrix": a.out,
        "sidecar": sidecar_path(&a.out),
        "m": op.m(),
        "n": op.n(),
        "spec_norm_sq": op.spec_norm_sq(),
        "regenerated_columns": op.provenance().regenerated_columns,
    }))
}

fn gen_dict(a: GenDict) -> CliResult {
    let dict = match a.rows {
        Rows::Random => overcomplete_dct(a.n, a.d, a.seed)?,
        Rows::Leading => leading_dct(a.n, a.d)?,
    };
    save_dictionary(&a.out, &dict)?;
    Ok(json!({"dictionary": a.out, "n": dict.n(), "d": dict.d()}))
}

fn load_dict(path: Option<&Path>, n: usize) -> Result<TightDictionary, Error> {
    match path {
        Some(p) => load_dictionary(p),
        None => Ok(TightDictionary::identity(n)),
    }
}

fn solve_cmd(a: Solve) -> CliResult {
    let op = load_operator(&a.operator)?;
    let dict = load_dict(a.dict.as_deref(), op.n())?;
    let spec = a.solver.spec();
    let result = if let Some(y) = &a.y {
        solve(&spec, &op, &dict, &read_vector(y)?)?
    } else {
        let inst = match (&a.instance, a.sparsity) {
            (Some(dir), _) => load_instance(dir)?,
            (None, Some(pct)) => {
                let inst = instance(&op, &dict, pct, a.snr, a.seed)?;
                if let Some(dir) = &a.save_instance {
                    save_instance(dir, &inst)?;
                }
                inst
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "give one of --y, --instance or --sparsity".into(),
                ))
            }
        };
        solve_instance(&spec, &op, &dict, &inst)?
    };
    if let Some(p) = &a.x_out {
        write_vector(p, &result.x_hat)?;
    }
    let doc = result.to_json(a.trace);
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(doc)
}

fn bench(a: Bench) -> CliResult {
    let mut cfg = BenchConfig::load(&a.config)?;
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    let report = run_benchmark(&cfg)?;
    let (csv, json_path) = report.write(&cfg.output_dir)?;
    let failed = report.cells.iter().filter(|c| !c.ok()).count();
    Ok(json!({
        "config_hash": report.config_hash,
        "csv": csv,
        "report": json_path,
        "cells": report.cells.len(),
        "failed_cells": failed,
        "runtime_secs": report.runtime_secs,
    }))
}

fn norm_kind(n: NormArg) -> NormKind {
    match n {
        NormArg::L2 => NormKind::L2,
        NormArg::Bnorm => NormKind::Bnorm,
    }
}

fn ric_cmd(a: Ric) -> CliResult {
    let op = load_operator(&a.operator)?;
    let method = a.method.method();
    let kind = norm_kind(a.norm);
    let est = match &a.dict {
        Some(p) => dric_estimate(&op, &load_dictionary(p)?, a.s, &method, kind)?,
        None => match kind {
            NormKind::L2 => ric(op.a(), a.s, &method)?,
            NormKind::Bnorm => ric_bnorm(&op, a.s, &method)?,
        },
    };
    let mut v = serde_json::to_value(&est)?;
    v["spec_norm_sq"] = json!(op.spec_norm_sq());
    Ok(v)
}

fn bounds(cmd: BoundsCommand) -> CliResult {
    match cmd {
        BoundsCommand::Constants {
            s,
            m_set,
            delta_hat,
            c1,
            c2,
        } => Ok(serde_json::to_value(bound_constants(s, m_set, delta_hat, c1, c2)?)?),
        BoundsCommand::Optimize { s, m_set, delta_hat } => {
            Ok(serde_json::to_value(optimize_constants(s, m_set, delta_hat)?)?)
        }
        BoundsCommand::Curves {
            compression,
            grid,
            m_over_s,
            axis,
            baseline,
            out,
        } => {
            let axis = match axis {
                AxisArg::Delta => CurveAxis::Delta,
                AxisArg::DeltaHat => CurveAxis::DeltaHat,
            };
            let curve = constants_curves(compression, &grid, m_over_s, axis)?;
            let base = match &baseline {
                Some(p) => read_baseline(p)?,
                None => vec![],
            };
            if let Some(p) = &out {
                fs::write(p, curves_csv(&curve, &base))?;
                let meta = json!({
                    "compression_ratio": curve.compression_ratio,
                    "m_over_n": curve.m_over_n,
                    "spec_norm_sq": curve.spec_norm_sq,
                    "m_over_s": curve.m_over_s,
                    "axis": curve.axis,
                    "axis_label": curve.axis_label,
                    "c1_conversion": curve.c1_conversion,
                    "baseline": baseline,
                });
                fs::write(sidecar_path(p), serde_json::to_string_pretty(&meta)?)?;
            }
            Ok(serde_json::to_value(&curve)?)
        }
        BoundsCommand::Lemma { operator, method } => {
            let op = load_operator(&operator)?;
            Ok(serde_json::to_value(lemma_checks(&op, &method.method())?)?)
        }
    }
}

/// Rows `(delta, c0, c1)` of a baseline-constants CSV with a header line.
fn read_baseline(path: &Path) -> Result<Vec<(f64, f64, f64)>, Error> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Format(format!("{}: line {} is not numeric", path.display(), i + 1)))?;
        let [d, c0, c1] = f[..] else {
            return Err(Error::Format(format!("{}: line {} needs 3 columns", path.display(), i + 1)));
        };
        rows.push((d, c0, c1));
    }
    Ok(rows)
}

fn curves_csv(curve: &tfsr_core::bounds::ConstantsCurve, base: &[(f64, f64, f64)]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("delta,delta_hat,c0_tf,c1_tf,valid");
    if !base.is_empty() {
        s.push_str(",c0_baseline,c1_baseline");
    }
    s.push('\n');
    for r in &curve.rows {
        s.push_str(&format!(
            "{},{},{},{},{}",
            r.delta,
            r.delta_hat,
            opt(r.c0_tf),
            opt(r.c1_tf),
            r.valid
        ));
        if !base.is_empty() {
            let hit = base.iter().find(|b| (b.0 - r.delta).abs() < 1e-12);
            s.push_str(&format!(",{},{}", opt(hit.map(|b| b.1)), opt(hit.map(|b| b.2))));
        }
        s.push('\n');
    }
    s
}

fn whiteness(a: Whiteness) -> CliResult {
    let op = load_operator(&a.operator)?;
    let spec = SolverSpec::new(a.algorithm, a.fidelity, a.lambda).with_max_iters(a.max_iters);
    let source = match a.source {
        SourceArg::Solver => ErrorSource::Solver,
        SourceArg::Isotropic => ErrorSource::Isotropic,
    };
    let r = residual_whiteness(&op, &spec, a.sparsity, a.snr, a.trials, a.seed, source)?;
    Ok(serde_json::to_value(r)?)
}

fn report(a: Report) -> CliResult {
    let texts = a
        .inputs
        .iter()
        .map(|p| read_text(p))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_reports(&texts)?;
    let rows = merged.lines().count().saturating_sub(1);
    fs::write(&a.out, &merged)?;
    Ok(json!({"rows": rows, "out": a.out}))
}
