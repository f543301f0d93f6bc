//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use wkelly_core::backtest::{max_drawdown, performance_metrics, MetricsReport, Trajectory};
use wkelly_core::data_ingest::log_returns;
use wkelly_core::experiments::{diversification_sweep, random_subset_study, StudyConfig, StudyReport};
use wkelly_core::inner_oracle::{fenchel_suite, robust_objective, InnerEvalConfig};
use wkelly_core::solver_kelly::solve_kelly;
use wkelly_core::solver_wkelly::solve_wkelly;
use wkelly_core::synthetic::{student_t_prices, study_universe, ten_asset_fixture, SyntheticSpec};
use wkelly_core::{make_weights, BallSpec, GroundNorm, ReturnKind, ReturnsMatrix, SolverSettings};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

/// Small random instance: `n ≤ 3` assets, `N ≤ 5` samples and a radius
/// log-uniform on `[1e-3, 5e-2]`.
fn small_instance(seed: u64) -> (ReturnsMatrix, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3usize);
    let n_samples = rng.gen_range(1..=5usize);
    let rows: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| (0..n).map(|_| rng.gen_range(-0.05..=0.05)).collect())
        .collect();
    let eps = rng.gen_range(1e-3f64.ln()..=5e-2f64.ln()).exp();
    (ReturnsMatrix::from_rows(&rows, ReturnKind::Log).unwrap(), eps)
}

const SMALL_INSTANCES: u64 = 25;

fn fenchel_duality() -> Outcome {
    let start = Instant::now();
    let ball = BallSpec::type2(0.0).unwrap();
    let report = fenchel_suite(7, 120, &ball, &InnerEvalConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.instances >= 100 && report.max_gap <= 1e-5 && elapsed < Duration::from_secs(60),
        format!(
            "max_gap={:e} over {} instances ({} comparisons) in {:.2?}",
            report.max_gap, report.instances, report.comparisons, elapsed
        ),
    )
}

fn strong_duality() -> Outcome {
    let cfg = InnerEvalConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..SMALL_INSTANCES {
        let (s, eps) = small_instance(seed);
        let ball = BallSpec::type2(eps).unwrap();
        let sol = solve_wkelly(&s, &ball, &settings()).map_err(|e| format!("instance {seed}: {e}"))?;
        let oracle = robust_objective(&sol.weights, &s, &ball, &cfg).map_err(|e| format!("instance {seed}: {e}"))?;
        worst = worst.max((sol.objective - oracle).abs());
    }
    check(worst <= 1e-4, format!("max |solver - oracle| = {worst:e} over {SMALL_INSTANCES} instances"))
}

fn saa_recovery() -> Outcome {
    let s = ReturnsMatrix::from_rows(&[vec![0.02, 0.01], vec![0.00, -0.01]], ReturnKind::Log).unwrap();
    let kelly = solve_kelly(&s, &settings()).map_err(|e| e.to_string())?;
    let sol = solve_wkelly(&s, &BallSpec::type2(0.0).unwrap(), &settings()).map_err(|e| e.to_string())?;
    let vertex = make_weights(&[1.0, 0.0]).unwrap();
    let w_err = sol.weights.max_abs_diff(&vertex);
    let obj_err = (sol.objective - kelly.objective).abs();
    // Exact value at the vertex: mean of ln e^{r_j1}.
    let exact_err = (sol.objective - 0.01).abs();
    check(
        w_err <= 1e-4 && obj_err <= 1e-6 && exact_err <= 1e-6,
        format!("|w - e1|_inf = {w_err:e}, |obj - kelly| = {obj_err:e}, |obj - 0.01| = {exact_err:e}"),
    )
}

fn single_asset_closed_form() -> Outcome {
    let r = [0.03, -0.01, 0.02, 0.015, -0.005];
    let s = ReturnsMatrix::from_rows(&r.iter().map(|x| vec![*x]).collect::<Vec<_>>(), ReturnKind::Log).unwrap();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let mut worst: f64 = 0.0;
    for eps in [0.001, 0.01, 0.1] {
        let sol = solve_wkelly(&s, &BallSpec::type2(eps).unwrap(), &settings()).map_err(|e| e.to_string())?;
        worst = worst.max((sol.objective - (mean - eps)).abs());
    }
    check(worst <= 1e-6, format!("max |obj - (mean - eps)| = {worst:e}"))
}

fn equal_weight_limit() -> Outcome {
    let samples = log_returns(&ten_asset_fixture()).unwrap();
    let table = diversification_sweep(&samples, &[50.0], 2.0, GroundNorm::L2, &settings()).map_err(|e| e.to_string())?;
    let row = &table.rows[0];
    let w = row.weights.as_ref().ok_or_else(|| format!("sweep row failed: {:?}", row.error))?;
    let dist = w.as_slice().iter().map(|x| (x - 0.1).abs()).fold(0.0, f64::max);
    check(dist <= 1e-2, format!("|w - 0.1|_inf = {dist:e} at epsilon {:e}", row.epsilon))
}

fn monotone_in_radius() -> Outcome {
    let grid = [0.0, 0.001, 0.01, 0.1, 1.0];
    let mut worst_rise = f64::NEG_INFINITY;
    for seed in [11, 12, 13] {
        let samples = log_returns(&student_t_prices(&SyntheticSpec::new(5, 60, seed)).unwrap()).unwrap();
        let mut prev = f64::INFINITY;
        for eps in grid {
            let obj = solve_wkelly(&samples, &BallSpec::type2(eps).unwrap(), &settings())
                .map_err(|e| format!("seed {seed} eps {eps}: {e}"))?
                .objective;
            if prev.is_finite() {
                worst_rise = worst_rise.max(obj - prev);
            }
            prev = obj;
        }
    }
    check(
        worst_rise <= 1e-8,
        format!("largest increase between consecutive radii = {worst_rise:e} on 3 fixtures"),
    )
}

fn order_one_variant() -> Outcome {
    let cfg = InnerEvalConfig::default();
    let (mut worst_gap, mut worst_norm): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for seed in 0..SMALL_INSTANCES {
        let (s, eps) = small_instance(seed);
        let ball = BallSpec::new(1.0, eps, GroundNorm::L2).unwrap();
        let sol = solve_wkelly(&s, &ball, &settings()).map_err(|e| format!("instance {seed}: {e}"))?;
        let oracle = robust_objective(&sol.weights, &s, &ball, &cfg).map_err(|e| format!("instance {seed}: {e}"))?;
        worst_gap = worst_gap.max((sol.objective - oracle).abs());
        for v in &sol.v {
            worst_norm = worst_norm.max(ball.dual_norm().eval(v) - sol.lambda);
        }
    }
    check(
        worst_gap <= 1e-4 && worst_norm <= 1e-8,
        format!("max |solver - oracle| = {worst_gap:e}, max(|v|_* - lambda) = {worst_norm:e}"),
    )
}

fn brute_force_drawdown(values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..values.len() {
        for t in s..values.len() {
            worst = worst.max((values[s] - values[t]) / values[s]);
        }
    }
    worst
}

fn backtest_identities() -> Outcome {
    let (mut growth_err, mut dd_err): (f64, f64) = (0.0, 0.0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..=300usize);
        let returns: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.08..0.08)).collect();
        let tr = Trajectory::from_returns(returns).map_err(|e| e.to_string())?;
        let m = performance_metrics(&tr, 252).map_err(|e| e.to_string())?;
        let v_t = *tr.values.last().unwrap();
        growth_err = growth_err.max((m.growth_rate - v_t.ln() / len as f64).abs());
        dd_err = dd_err.max((max_drawdown(&tr.values) - brute_force_drawdown(&tr.values)).abs());
        dd_err = dd_err.max((m.max_drawdown - brute_force_drawdown(&tr.values)).abs());
    }
    check(
        growth_err <= 1e-12 && dd_err <= 1e-15,
        format!("max growth drift = {growth_err:e}, max drawdown mismatch = {dd_err:e} on 100 paths"),
    )
}

fn study_config() -> StudyConfig {
    let mut cfg = StudyConfig::new(study_universe(1));
    cfg.subset_size = 10;
    cfg.train_periods = 60;
    cfg.trials = 200;
    cfg.delta_grid = vec![0.0, 0.1, 0.2, 0.4];
    cfg.seed = 1;
    cfg
}

/// Tukey hinge at depth `(⌊(n+1)/2⌋ + 1) / 2` from either end.
fn hinges(values: &[f64]) -> (f64, f64, f64) {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let at_depth = |d: f64| 0.5 * (x[d.floor() as usize - 1] + x[d.ceil() as usize - 1]);
    let median_depth = (n as f64 + 1.0) / 2.0;
    let hinge_depth = (median_depth.floor() + 1.0) / 2.0;
    let lower = at_depth(hinge_depth);
    let upper = 0.5 * (x[n - hinge_depth.floor() as usize] + x[n - hinge_depth.ceil() as usize]);
    (lower, at_depth(median_depth), upper)
}

fn schema_problems(report: &StudyReport, json: &Value) -> Vec<String> {
    let mut problems = Vec::new();
    let meta = &json["metadata"];
    for key in [
        "seed", "trials", "subset_size", "universe_size", "train_periods", "test_periods", "train_start",
        "train_end", "test_start", "test_end", "delta_grid", "p", "norm", "periods_per_year", "quartile_method",
        "radius_rule",
    ] {
        if meta.get(key).is_none() {
            problems.push(format!("metadata.{key} missing"));
        }
    }
    if meta["test_periods"] != 250 || meta["train_periods"] != 60 || meta["universe_size"] != 20 {
        problems.push("window sizes".into());
    }
    let cells = json["cells"].as_array().map(Vec::len).unwrap_or(0);
    if cells != 200 * 4 {
        problems.push(format!("{cells} cells"));
    }
    for cell in json["cells"].as_array().into_iter().flatten() {
        let ok = cell["assets"].as_array().map(Vec::len) == Some(10)
            && (cell["metrics"].is_object() || cell["error"].is_string());
        if !ok {
            problems.push(format!("malformed cell {}", cell));
            break;
        }
    }
    let summaries = json["summaries"].as_array().cloned().unwrap_or_default();
    if summaries.len() != 4 {
        problems.push(format!("{} summaries", summaries.len()));
    }
    for s in &summaries {
        let names: Vec<&str> = s["metrics"].as_array().into_iter().flatten().filter_map(|m| m["metric"].as_str()).collect();
        if names != MetricsReport::METRIC_NAMES {
            problems.push(format!("metric names {names:?}"));
        }
        if s["band"]["mean"].as_array().map(Vec::len) != Some(251) {
            problems.push("band length".into());
        }
    }
    // Summary statistics must agree with an independent hinge computation.
    for summary in &report.summaries {
        for (k, name) in MetricsReport::METRIC_NAMES.iter().enumerate() {
            let values: Vec<f64> = report
                .cells
                .iter()
                .filter(|c| c.delta == summary.delta)
                .filter_map(|c| c.metrics.map(|m| m.values()[k]))
                .collect();
            let Some(stats) = summary.metric(name) else {
                problems.push(format!("no stats for {name}"));
                continue;
            };
            let (q1, median, q3) = hinges(&values);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            if stats.count != values.len() || !close(stats.q1, q1) || !close(stats.median, median) || !close(stats.q3, q3) || !close(stats.mean, mean) {
                problems.push(format!("boxplot mismatch for {name} at delta {}", summary.delta));
            }
        }
    }
    problems
}

fn run_study(threads: Option<usize>) -> Result<StudyReport, String> {
    let cfg = study_config();
    match threads {
        None => random_subset_study(&cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| e.to_string())?
            .install(|| random_subset_study(&cfg)),
    }
    .map_err(|e| e.to_string())
}

fn desk_scale_study(saved: &mut Option<String>) -> Outcome {
    let start = Instant::now();
    let report = run_study(None)?;
    let elapsed = start.elapsed();
    let text = report.to_json().map_err(|e| e.to_string())?;
    let json: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let problems = schema_problems(&report, &json);
    let vol = |d: f64| report.summary(d).and_then(|s| s.metric("annualized_volatility")).map(|b| b.mean);
    let (v0, v4) = (vol(0.0).unwrap_or(f64::NAN), vol(0.4).unwrap_or(f64::NAN));
    let failed: usize = report.summaries.iter().map(|s| s.failed).sum();
    *saved = Some(text);
    check(
        problems.is_empty() && elapsed < Duration::from_secs(600) && v4 <= v0,
        format!(
            "mean volatility {v0:.4} at delta 0 vs {v4:.4} at delta 0.4, {failed} failed fits, {:.1?}, schema problems: {problems:?}",
            elapsed
        ),
    )
}

fn determinism(first: Option<String>) -> Outcome {
    let first = match first {
        Some(t) => t,
        None => run_study(None)?.to_json().map_err(|e| e.to_string())?,
    };
    let again = run_study(None)?.to_json().map_err(|e| e.to_string())?;
    let one = run_study(Some(1))?.to_json().map_err(|e| e.to_string())?;
    let four = run_study(Some(4))?.to_json().map_err(|e| e.to_string())?;
    check(
        first == again && first == one && first == four,
        format!(
            "repeat run identical: {}, 1 thread identical: {}, 4 threads identical: {} ({} bytes)",
            first == again,
            first == one,
            first == four,
            first.len()
        ),
    )
}

fn run(index: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("criterion {index:>2} {name}: PASS ({detail})");
            true
        }
        Err(detail) => {
            println!("criterion {index:>2} {name}: FAIL ({detail})");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut saved = None;
    let results = [
        run(1, "fenchel duality suite", fenchel_duality),
        run(2, "end-to-end strong duality", strong_duality),
        run(3, "zero-radius recovers Kelly", saa_recovery),
        run(4, "single-asset closed form", single_asset_closed_form),
        run(5, "equal-weight limit", equal_weight_limit),
        run(6, "objective non-increasing in radius", monotone_in_radius),
        run(7, "order-one variant", order_one_variant),
        run(8, "backtest identities", backtest_identities),
        run(9, "desk-scale study", || desk_scale_study(&mut saved)),
        run(10, "study determinism", || determinism(saved.take())),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
