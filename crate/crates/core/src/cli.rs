//! Command-line front end: `fit`, `cv`, `simulate`, `bench` and `diagnose`.
//!
//! Settings come from an optional JSON config file (`--config`) with one
//! section per concern; command-line flags override file values. Every
//! output carries a provenance block with the effective settings.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bench::{run_scenario, write_rows, BenchOptions, Scenario};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::SmoothingKernel;
use crate::metrics::spearman_monotonicity_test;
use crate::optim::{fit_rmrce, FitConfig, Method};
use crate::simulate::{generate_dataset, Link, SimSpec};
use crate::tuning::{dimension_rule_check, grid_search, CvGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

#[derive(Debug, Parser)]
#[command(name = "rmrce", version, about = "Smoothed L1-regularized maximum rank correlation estimation")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    log_level: Option<LogLevel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit RMRCE to a CSV dataset.
    Fit(FitArgs),
    /// Cross-validate over a (lambda, alpha) grid.
    Cv(CvArgs),
    /// Draw a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run a named benchmark scenario.
    Bench(BenchArgs),
    /// Split-half Spearman monotonicity check.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args, Default)]
struct DataArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Response column name (default: first column).
    #[arg(long)]
    response: Option<String>,
    /// Anchor column name or zero-based covariate index (default: first covariate).
    #[arg(long)]
    anchor: Option<String>,
}

#[derive(Debug, Args, Default)]
struct EstimatorArgs {
    #[arg(long)]
    kernel: Option<SmoothingKernel>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    coord_tol: Option<f64>,
    #[arg(long)]
    obj_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Include per-sweep objective, penalty and gap bound.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    link: Option<Link>,
    /// Fraction of Cauchy outliers in the noise.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    scenario: Scenario,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    kernel: Option<SmoothingKernel>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m_tests: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct DataSection {
    input: Option<PathBuf>,
    response: Option<String>,
    anchor: Option<String>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FitSection {
    alpha: Option<f64>,
    lambda: Option<f64>,
    kernel: Option<SmoothingKernel>,
    max_sweeps: Option<usize>,
    coord_tol: Option<f64>,
    obj_tol: Option<f64>,
    init_step: Option<f64>,
    backtrack_factor: Option<f64>,
    max_backtracks: Option<usize>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct CvSection {
    lambdas: Option<Vec<f64>>,
    alphas: Option<Vec<f64>>,
    folds: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SimulateSection {
    n: Option<usize>,
    d: Option<usize>,
    link: Option<Link>,
    delta: Option<f64>,
    rho: Option<f64>,
    seed: Option<u64>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct BenchSection {
    reps: Option<usize>,
    seed: Option<u64>,
    methods: Option<Vec<Method>>,
    alpha: Option<f64>,
    kernel: Option<SmoothingKernel>,
    threads: Option<usize>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct DiagnoseSection {
    seed: Option<u64>,
    m_tests: Option<usize>,
    #[serde(flatten)]
    extra: Extra,
}

/// Parsed `--config` file. Unknown keys are collected and reported as
/// warnings.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    log_level: Option<LogLevel>,
    data: DataSection,
    fit: FitSection,
    cv: CvSection,
    simulate: SimulateSection,
    bench: BenchSection,
    diagnose: DiagnoseSection,
    #[serde(flatten)]
    extra: Extra,
}

impl RunConfig {
    /// Dotted paths of keys this version does not recognize.
    pub fn unknown_keys(&self) -> Vec<String> {
        let sections: [(&str, &Extra); 6] = [
            ("data", &self.data.extra),
            ("fit", &self.fit.extra),
            ("cv", &self.cv.extra),
            ("simulate", &self.simulate.extra),
            ("bench", &self.bench.extra),
            ("diagnose", &self.diagnose.extra),
        ];
        let mut keys: Vec<String> = self.extra.keys().cloned().collect();
        for (name, extra) in sections {
            keys.extend(extra.keys().map(|k| format!("{name}.{k}")));
        }
        keys
    }
}

/// Reads a JSON config. Parse errors carry line and column.
pub fn load_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

struct Ctx {
    file: RunConfig,
    command_line: Vec<String>,
}

impl Ctx {
    fn provenance(&self, command: &str, seed: Option<u64>, config: Value) -> Value {
        json!({
            "tool": "rmrce",
            "version": VERSION,
            "command": command,
            "seed": seed,
            "config": config,
        })
    }

    fn data_path(&self, flag: &DataArgs) -> Result<PathBuf> {
        let input = flag
            .input
            .clone()
            .or_else(|| self.file.data.input.clone())
            .ok_or_else(|| Error::InvalidInput("missing required flag --input".into()))?;
        if !input.is_file() {
            return Err(Error::InvalidInput(format!("--input {} is not a readable file", input.display())));
        }
        Ok(input)
    }

    fn load_data(&self, flag: &DataArgs) -> Result<(Dataset, PathBuf, Option<String>)> {
        let path = self.data_path(flag)?;
        let response = flag.response.clone().or_else(|| self.file.data.response.clone());
        let data = Dataset::from_csv_path(&path, response.as_deref())?;
        Ok((data, path, response))
    }

    fn anchor_index(&self, flag: &DataArgs, data: &Dataset) -> Result<usize> {
        match flag.anchor.clone().or_else(|| self.file.data.anchor.clone()) {
            None => Ok(0),
            Some(name) => data
                .feature_index(&name)
                .or_else(|| name.parse::<usize>().ok().filter(|&j| j < data.d()))
                .ok_or_else(|| Error::InvalidInput(format!("--anchor '{name}' names no covariate column"))),
        }
    }

    fn fit_config(&self, est: &EstimatorArgs, alpha: Option<f64>, lambda: Option<f64>, anchor: usize) -> Result<FitConfig> {
        let f = &self.file.fit;
        let d = FitConfig::default();
        let cfg = FitConfig {
            alpha: pick(alpha, f.alpha, d.alpha),
            lambda: pick(lambda, f.lambda, d.lambda),
            kernel: pick(est.kernel, f.kernel, d.kernel),
            anchor_index: anchor,
            max_sweeps: pick(est.max_sweeps, f.max_sweeps, d.max_sweeps),
            coord_tol: pick(est.coord_tol, f.coord_tol, d.coord_tol),
            obj_tol: pick(est.obj_tol, f.obj_tol, d.obj_tol),
            init_step: f.init_step.unwrap_or(d.init_step),
            backtrack_factor: f.backtrack_factor.unwrap_or(d.backtrack_factor),
            max_backtracks: f.max_backtracks.unwrap_or(d.max_backtracks),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn check_out(out: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = out {
        let parent = p.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Error::InvalidInput(format!("output directory {} does not exist", parent.display())));
        }
    }
    Ok(())
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json(out: &Option<PathBuf>, value: &Value) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn warn_dimension_rule(data: &Dataset) {
    let (ok, msg) = dimension_rule_check(data.n(), data.d() as f64);
    if !ok {
        log::warn!("{msg}");
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn coefficient_map(data: &Dataset, coef: &[f64]) -> Value {
    Value::Object(
        data.feature_names()
            .iter()
            .zip(coef)
            .map(|(name, b)| (name.clone(), json!(b)))
            .collect(),
    )
}

fn selected_names(data: &Dataset, coef: &[f64], anchor: usize) -> Vec<String> {
    coef.iter()
        .enumerate()
        .filter(|&(j, b)| j != anchor && *b != 0.0)
        .map(|(j, _)| data.feature_names()[j].clone())
        .collect()
}

fn fit_settings(cfg: &FitConfig, data: &Dataset, input: &Path, response: &Option<String>) -> Value {
    json!({
        "input": input,
        "response": response,
        "anchor": data.feature_names()[cfg.anchor_index],
        "alpha": cfg.alpha,
        "lambda": cfg.lambda,
        "kernel": cfg.kernel,
        "max_sweeps": cfg.max_sweeps,
        "coord_tol": cfg.coord_tol,
        "obj_tol": cfg.obj_tol,
        "init_step": cfg.init_step,
        "backtrack_factor": cfg.backtrack_factor,
        "max_backtracks": cfg.max_backtracks,
    })
}

fn cmd_fit(ctx: &Ctx, args: &FitArgs) -> Result<()> {
    check_out(&args.out)?;
    let (data, path, response) = ctx.load_data(&args.data)?;
    let anchor = ctx.anchor_index(&args.data, &data)?;
    let mut cfg = ctx.fit_config(&args.est, args.alpha, args.lambda, anchor)?;
    cfg.trace_diagnostics = args.trace;
    warn_dimension_rule(&data);
    let fit = fit_rmrce(&data, &cfg)?;
    if !fit.converged {
        log::warn!("fit did not converge after {} sweeps", fit.sweeps_used);
    }
    let mut settings = fit_settings(&cfg, &data, &path, &response);
    settings["trace"] = json!(args.trace);
    let mut out = json!({
        "provenance": ctx.provenance("fit", None, settings),
        "coefficients": coefficient_map(&data, &fit.coef),
        "objective": fit.objective,
        "converged": fit.converged,
        "sweeps": fit.sweeps_used,
        "selected": selected_names(&data, &fit.coef, anchor),
        "warm_start": coefficient_map(&data, &fit.warm_start_used),
        "diagnostic": fit.diagnostic,
    });
    if args.trace {
        out["trace"] = serde_json::to_value(&fit.trace)?;
    }
    write_json(&args.out, &out)
}

fn cmd_cv(ctx: &Ctx, args: &CvArgs) -> Result<()> {
    check_out(&args.out)?;
    let (data, path, response) = ctx.load_data(&args.data)?;
    let anchor = ctx.anchor_index(&args.data, &data)?;
    let base = ctx.fit_config(&args.est, None, None, anchor)?;
    let c = &ctx.file.cv;
    let defaults = CvGrid::default();
    let grid = CvGrid {
        lambdas: pick(args.lambdas.clone(), c.lambdas.clone(), defaults.lambdas),
        alphas: pick(args.alphas.clone(), c.alphas.clone(), defaults.alphas),
        folds: pick(args.folds, c.folds, defaults.folds),
        seed: pick(args.seed, c.seed, defaults.seed),
    };
    grid.validate(data.n())?;
    warn_dimension_rule(&data);
    let threads = args.threads.or(c.threads);
    let result = with_threads(threads, || grid_search(&data, &grid, &base))??;
    let best_cfg = FitConfig {
        lambda: result.best_lambda,
        alpha: result.best_alpha,
        ..base.clone()
    };
    let refit = fit_rmrce(&data, &best_cfg)?;
    let mut settings = fit_settings(&base, &data, &path, &response);
    settings["grid"] = serde_json::to_value(&grid)?;
    let out = json!({
        "provenance": ctx.provenance("cv", Some(grid.seed), settings),
        "best_lambda": result.best_lambda,
        "best_alpha": result.best_alpha,
        "best_score": result.best_score,
        "score_table": result.score_table,
        "fold_assignments": result.fold_assignments,
        "refit": {
            "coefficients": coefficient_map(&data, &refit.coef),
            "objective": refit.objective,
            "converged": refit.converged,
            "selected": selected_names(&data, &refit.coef, anchor),
        },
    });
    write_json(&args.out, &out)
}

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<()> {
    check_out(&args.out)?;
    check_out(&args.truth_out)?;
    let s = &ctx.file.simulate;
    let n = args.n.or(s.n).ok_or_else(|| Error::InvalidInput("missing required flag --n".into()))?;
    let d = args.d.or(s.d).ok_or_else(|| Error::InvalidInput("missing required flag --d".into()))?;
    let seed = pick(args.seed, s.seed, 0);
    let mut spec = SimSpec::new(n, d, seed)
        .with_link(pick(args.link, s.link, Link::Identity))
        .with_outliers(pick(args.delta, s.delta, 0.0));
    spec.ar1_rho = pick(args.rho, s.rho, spec.ar1_rho);
    spec.validate()?;
    let sim = generate_dataset(&spec)?;
    let provenance = ctx.provenance("simulate", Some(seed), serde_json::to_value(&spec)?);

    let mut w = open_out(&args.out)?;
    writeln!(w, "# {}", serde_json::to_string(&provenance)?)?;
    sim.dataset.write_csv(&mut w, "y")?;
    w.flush()?;

    if args.truth_out.is_some() {
        let truth = json!({
            "provenance": provenance,
            "beta0": spec.beta0,
            "beta_star": sim.beta_star,
            "true_support": spec.true_support(),
            "outliers": sim.outlier_mask.iter().filter(|&&m| m).count(),
        });
        write_json(&args.truth_out, &truth)?;
    }
    Ok(())
}

fn cmd_bench(ctx: &Ctx, args: &BenchArgs) -> Result<()> {
    check_out(&args.out)?;
    let b = &ctx.file.bench;
    let d = BenchOptions::default();
    let opts = BenchOptions {
        reps: pick(args.reps, b.reps, d.reps),
        seed: pick(args.seed, b.seed, d.seed),
        methods: pick(args.methods.clone(), b.methods.clone(), d.methods),
        alpha: pick(args.alpha, b.alpha, d.alpha),
        kernel: pick(args.kernel, b.kernel, d.kernel),
    };
    let threads = args.threads.or(b.threads);
    let started = Instant::now();
    let rows = with_threads(threads, || run_scenario(args.scenario, &opts))??;
    log::info!("bench {} finished in {:.2?}", args.scenario, started.elapsed());

    let mut settings = serde_json::to_value(&opts)?;
    settings["scenario"] = json!(args.scenario);
    let provenance = ctx.provenance("bench", Some(opts.seed), settings);
    let mut w = open_out(&args.out)?;
    writeln!(w, "# {}", serde_json::to_string(&provenance)?)?;
    write_rows(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn cmd_diagnose(ctx: &Ctx, args: &DiagnoseArgs) -> Result<()> {
    check_out(&args.out)?;
    let (data, path, response) = ctx.load_data(&args.data)?;
    let anchor = ctx.anchor_index(&args.data, &data)?;
    let cfg = ctx.fit_config(&args.est, args.alpha, args.lambda, anchor)?;
    let s = &ctx.file.diagnose;
    let seed = pick(args.seed, s.seed, 0);
    let m_tests = pick(args.m_tests, s.m_tests, 1);
    let result = spearman_monotonicity_test(&data, &cfg, seed, m_tests)?;
    let mut settings = fit_settings(&cfg, &data, &path, &response);
    settings["m_tests"] = json!(m_tests);
    let mut out = serde_json::to_value(&result)?;
    out["provenance"] = ctx.provenance("diagnose", Some(seed), settings);
    write_json(&args.out, &out)
}

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Quiet => log::LevelFilter::Error,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn dispatch(cli: Cli, command_line: Vec<String>) -> Result<()> {
    let file = match &cli.config {
        Some(p) => load_config_file(p)?,
        None => RunConfig::default(),
    };
    init_logging(pick(cli.log_level, file.log_level, LogLevel::Info));
    for key in file.unknown_keys() {
        log::warn!("ignoring unknown config key '{key}'");
    }
    let ctx = Ctx { file, command_line };
    log::debug!("command line: {:?}", ctx.command_line);
    match &cli.command {
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Cv(a) => cmd_cv(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Diagnose(a) => cmd_diagnose(&ctx, a),
    }
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 1 on invalid input, 2 on numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 }
                }
                _ => {
                    let text = e.to_string();
                    let line = text.lines().next().unwrap_or("invalid arguments");
                    eprintln!("error: {}", line.trim_start_matches("error: ").trim());
                    1
                }
            };
        }
    };
    match dispatch(cli, command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
