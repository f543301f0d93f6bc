use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use wkelly_core::backtest::{performance_metrics, run_constant_mix, DEFAULT_PERIODS_PER_YEAR};
use wkelly_core::data_ingest::{epsilon_from_delta, load_prices, log_returns, simple_returns, PriceFormat, PriceTable};
use wkelly_core::error::ErrorClass;
use wkelly_core::experiments::{diversification_sweep, random_subset_study, StudyConfig};
use wkelly_core::inner_oracle::{fenchel_suite, robust_evaluation, InnerEvalConfig};
use wkelly_core::solver_wkelly::solve_wkelly;
use wkelly_core::{make_weights, BallSpec, GroundNorm, ReturnsMatrix, SolverSettings};

const DUALITY_TOL: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "wkelly", version, about = "Kelly and Wasserstein-Kelly portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the robust (or, at zero radius, the plain Kelly) portfolio.
    Optimize(OptimizeArgs),
    /// Evaluate the worst-case growth of a given portfolio.
    RobustObjective(RobustObjectiveArgs),
    /// Constant-mix backtest of a given portfolio.
    Backtest(BacktestArgs),
    /// Optimal portfolios over a grid of radius scales.
    Sweep(SweepArgs),
    /// Random-subset out-of-sample study.
    Study(StudyArgs),
    /// Compare the primal and conjugate inner problems on random instances.
    CheckDuality(CheckDualityArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Norm {
    L2,
    L1,
    Linf,
}

impl From<Norm> for GroundNorm {
    fn from(n: Norm) -> Self {
        match n {
            Norm::L2 => GroundNorm::L2,
            Norm::L1 => GroundNorm::L1,
            Norm::Linf => GroundNorm::Linf,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct BallArgs {
    /// Wasserstein order.
    #[arg(long = "p", default_value_t = 2.0)]
    p: f64,
    #[arg(long, value_enum, default_value_t = Norm::L2)]
    norm: Norm,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct RadiusArgs {
    /// Radius as a multiple of the mean absolute log-return.
    #[arg(long)]
    delta: Option<f64>,
    /// Absolute radius.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write data here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long)]
    prices: PathBuf,
    #[command(flatten)]
    radius: RadiusArgs,
    #[command(flatten)]
    ball: BallArgs,
    /// Use only the last N return periods.
    #[arg(long)]
    train_days: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct RobustObjectiveArgs {
    #[arg(long)]
    prices: PathBuf,
    /// Comma-separated weights in column order.
    #[arg(long)]
    weights: String,
    #[command(flatten)]
    radius: RadiusArgs,
    #[command(flatten)]
    ball: BallArgs,
    #[arg(long)]
    train_days: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    weights: String,
    #[arg(long, default_value_t = DEFAULT_PERIODS_PER_YEAR)]
    periods_per_year: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    prices: PathBuf,
    /// Comma-separated radius scales.
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4")]
    deltas: String,
    #[command(flatten)]
    ball: BallArgs,
    #[arg(long)]
    train_days: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4")]
    deltas: String,
    #[command(flatten)]
    ball: BallArgs,
    #[arg(long, default_value_t = 252)]
    train_days: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    subset_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First test date (YYYY-MM-DD).
    #[arg(long)]
    test_start: Option<NaiveDate>,
    /// Last test date (YYYY-MM-DD).
    #[arg(long)]
    test_end: Option<NaiveDate>,
    #[arg(long, default_value_t = DEFAULT_PERIODS_PER_YEAR)]
    periods_per_year: u32,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write mean/stdev value bands as CSV.
    #[arg(long)]
    bands: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct CheckDualityArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[command(flatten)]
    ball: BallArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<wkelly_core::Error>() {
            return match err.class() {
                ErrorClass::Validation => 1,
                ErrorClass::Solver => 2,
                ErrorClass::Io => 3,
            };
        }
        if cause.is::<io::Error>() {
            return 3;
        }
    }
    1
}

fn run(command: Command) -> Result<u8> {
    if let Command::Study(args) = command {
        return study(args);
    }
    // Everything except the study runs on one thread.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    pool.install(|| match command {
        Command::Optimize(a) => optimize(a),
        Command::RobustObjective(a) => robust_objective(a),
        Command::Backtest(a) => backtest(a),
        Command::Sweep(a) => sweep(a),
        Command::CheckDuality(a) => check_duality(a),
        Command::Study(_) => unreachable!(),
    })
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: &Option<PathBuf>, value: &Value) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// JSON number, or a string for non-finite values.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(wkelly_core::extended::format_f64(x))
    }
}

fn load(path: &Path) -> Result<PriceTable> {
    Ok(load_prices(path, PriceFormat::WideCsv)?)
}

fn training_returns(prices: &PriceTable, train_days: Option<usize>) -> Result<ReturnsMatrix> {
    let r = log_returns(prices)?;
    match train_days {
        None => Ok(r),
        Some(0) => Err(wkelly_core::Error::InvalidConfig("--train-days must be positive".into()).into()),
        Some(k) if k > r.n_samples() => Err(wkelly_core::Error::InsufficientData(format!(
            "--train-days {k} exceeds the {} available periods",
            r.n_samples()
        ))
        .into()),
        Some(k) => Ok(r.slice_samples(r.n_samples() - k, r.n_samples())?),
    }
}

struct Radius {
    epsilon: f64,
    delta: Option<f64>,
    rbar: Option<f64>,
}

fn resolve_radius(radius: &RadiusArgs, samples: &ReturnsMatrix) -> Result<Radius> {
    match (radius.delta, radius.epsilon) {
        (Some(d), None) => {
            let rule = epsilon_from_delta(samples, d)?;
            Ok(Radius {
                epsilon: rule.epsilon,
                delta: Some(d),
                rbar: Some(rule.rbar),
            })
        }
        (None, Some(e)) => Ok(Radius {
            epsilon: e,
            delta: None,
            rbar: None,
        }),
        _ => Err(anyhow!("exactly one of --delta or --epsilon is required")),
    }
}

fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                wkelly_core::Error::InvalidConfig(format!("{flag}: cannot parse `{}` as a number", s.trim())).into()
            })
        })
        .collect()
}

fn optimize(a: OptimizeArgs) -> Result<u8> {
    let prices = load(&a.prices)?;
    let samples = training_returns(&prices, a.train_days)?;
    let radius = resolve_radius(&a.radius, &samples)?;
    let ball = BallSpec::new(a.ball.p, radius.epsilon, a.ball.norm.into())?;
    let sol = solve_wkelly(&samples, &ball, &SolverSettings::default())?;
    eprintln!(
        "epsilon={} objective={} status={:?} iterations={}",
        radius.epsilon, sol.objective, sol.status, sol.iterations
    );
    let labels = samples.asset_labels();
    match a.output.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            &a.output.out,
            &json!({
                "assets": labels,
                "weights": sol.weights.as_slice(),
                "epsilon": radius.epsilon,
                "delta": radius.delta,
                "rbar": radius.rbar,
                "p": a.ball.p,
                "norm": GroundNorm::from(a.ball.norm).name(),
                "objective": num(sol.objective),
                "lambda": num(sol.lambda),
                "status": sol.status,
                "iterations": sol.iterations,
            }),
        )?,
        Format::Csv => {
            let mut w = open_out(&a.output.out)?;
            writeln!(w, "asset,weight")?;
            for (label, x) in labels.iter().zip(sol.weights.as_slice()) {
                writeln!(w, "{label},{x}")?;
            }
            w.flush()?;
        }
    }
    Ok(0)
}

fn robust_objective(a: RobustObjectiveArgs) -> Result<u8> {
    let prices = load(&a.prices)?;
    let samples = training_returns(&prices, a.train_days)?;
    let w = make_weights(&parse_list(&a.weights, "--weights")?)?;
    let radius = resolve_radius(&a.radius, &samples)?;
    let ball = BallSpec::new(a.ball.p, radius.epsilon, a.ball.norm.into())?;
    let eval = robust_evaluation(&w, &samples, &ball, &InnerEvalConfig::default())?;
    eprintln!("robust objective {} at lambda {}", eval.value, eval.lambda);
    match a.output.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            &a.output.out,
            &json!({
                "value": num(eval.value),
                "lambda": num(eval.lambda),
                "epsilon": radius.epsilon,
                "delta": radius.delta,
            }),
        )?,
        Format::Csv => {
            let mut w = open_out(&a.output.out)?;
            writeln!(w, "value,lambda,epsilon")?;
            let f = wkelly_core::extended::format_f64;
            writeln!(w, "{},{},{}", f(eval.value), f(eval.lambda), radius.epsilon)?;
            w.flush()?;
        }
    }
    Ok(0)
}

fn backtest(a: BacktestArgs) -> Result<u8> {
    let prices = load(&a.prices)?;
    let returns = simple_returns(&prices)?;
    let w = make_weights(&parse_list(&a.weights, "--weights")?)?;
    let tr = run_constant_mix(&w, &returns)?;
    let m = performance_metrics(&tr, a.periods_per_year)?;
    eprintln!(
        "annualized return {:.4}, volatility {:.4}, max drawdown {:.4}",
        m.annualized_return, m.annualized_volatility, m.max_drawdown
    );
    match a.output.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&a.output.out, &json!({ "metrics": m, "trajectory": tr.values }))?,
        Format::Csv => {
            let mut w = open_out(&a.output.out)?;
            writeln!(w, "t,value")?;
            for (t, v) in tr.values.iter().enumerate() {
                writeln!(w, "{t},{v}")?;
            }
            w.flush()?;
        }
    }
    Ok(0)
}

fn sweep(a: SweepArgs) -> Result<u8> {
    let prices = load(&a.prices)?;
    let samples = training_returns(&prices, a.train_days)?;
    let grid = parse_list(&a.deltas, "--deltas")?;
    let table = diversification_sweep(&samples, &grid, a.ball.p, a.ball.norm.into(), &SolverSettings::default())?;
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} radius scales, {failed} failed, mean |r| = {}", table.rows.len(), table.rbar);
    match a.output.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(&a.output.out, &serde_json::to_value(&table)?)?,
        Format::Csv => {
            let mut w = open_out(&a.output.out)?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(0)
}

fn study(a: StudyArgs) -> Result<u8> {
    let mut cfg = StudyConfig::new(load(&a.prices)?);
    cfg.delta_grid = parse_list(&a.deltas, "--deltas")?;
    cfg.p = a.ball.p;
    cfg.norm = a.ball.norm.into();
    cfg.train_periods = a.train_days;
    cfg.trials = a.trials;
    cfg.subset_size = a.subset_size;
    cfg.seed = a.seed;
    cfg.test_start = a.test_start;
    cfg.test_end = a.test_end;
    cfg.periods_per_year = a.periods_per_year;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        if n == 0 {
            return Err(wkelly_core::Error::InvalidConfig("--threads must be positive".into()).into());
        }
        builder = builder.num_threads(n);
    }
    let report = builder.build()?.install(|| random_subset_study(&cfg))?;

    for s in &report.summaries {
        let vol = s.metric("annualized_volatility").map(|b| b.mean).unwrap_or(f64::NAN);
        eprintln!(
            "delta={} {}: {} ok, {} failed, mean volatility {vol:.4}",
            s.delta, s.label, s.succeeded, s.failed
        );
    }
    if let Some(path) = &a.bands {
        let mut w = open_out(&Some(path.clone()))?;
        report.write_bands_csv(&mut w)?;
        w.flush()?;
    }
    match a.output.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut w = open_out(&a.output.out)?;
            writeln!(w, "{}", report.to_json()?)?;
            w.flush()?;
        }
        Format::Csv => {
            let mut w = open_out(&a.output.out)?;
            report.write_long_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(0)
}

fn check_duality(a: CheckDualityArgs) -> Result<u8> {
    if a.instances == 0 {
        return Err(wkelly_core::Error::InvalidConfig("--instances must be positive".into()).into());
    }
    let ball = BallSpec::new(a.ball.p, 0.0, a.ball.norm.into())?;
    let report = fenchel_suite(a.seed, a.instances, &ball, &InnerEvalConfig::default())?;
    eprintln!(
        "{} instances, {} comparisons, worst instance {}",
        report.instances, report.comparisons, report.worst_instance
    );
    let mut w = open_out(&a.out)?;
    if report.max_gap.is_finite() {
        writeln!(w, "max_gap={:e}", report.max_gap)?;
    } else {
        writeln!(w, "max_gap={}", wkelly_core::extended::format_f64(report.max_gap))?;
    }
    w.flush()?;
    Ok(if report.max_gap <= DUALITY_TOL { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        let solver = anyhow::Error::from(wkelly_core::Error::NumericFailure("stalled".into()));
        assert_eq!(exit_code(&solver), 2);
        let bad = anyhow::Error::from(wkelly_core::Error::InvalidConfig("x".into()));
        assert_eq!(exit_code(&bad.context("while parsing")), 1);
        let io = anyhow::Error::from(io::Error::other("disk"));
        assert_eq!(exit_code(&io.context("cannot create out.csv")), 3);
        assert_eq!(exit_code(&anyhow!("plain")), 1);
    }

    #[test]
    fn lists_reject_garbage() {
        assert_eq!(parse_list("0, 0.1,0.2", "--deltas").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(exit_code(&parse_list("0,x", "--deltas").unwrap_err()), 1);
    }
}
