//! Diversification sweeps and randomized out-of-sample studies.

use std::io::Write;
use std::path::PathBuf;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::backtest::{
    aggregate_trajectories, performance_metrics, run_constant_mix, BandSummary, MetricsReport,
    Trajectory,
};
use crate::data_ingest::{epsilon_from_delta, log_returns, simple_returns, PriceTable};
use crate::domain::{BallSpec, GroundNorm, ReturnsMatrix, SimplexWeights, SolverSettings, SolverStatus};
use crate::error::{Error, Result};
use crate::extended::{format_f64, serialize_f64_ext};
use crate::solver_wkelly::solve_wkelly;

pub const QUARTILE_METHOD: &str =
    "inclusive median: q1 and q3 are medians of the lower and upper halves, each including the overall median when the count is odd";

fn csv_io(e: csv::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<writer>"),
        source: e.into(),
    }
}

fn check_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("delta grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidConfig(format!("delta must be finite and non-negative, got {bad}")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub epsilon: f64,
    pub status: Option<SolverStatus>,
    pub weights: Option<SimplexWeights>,
    pub objective: Option<f64>,
    pub herfindahl: Option<f64>,
    pub entropy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub asset_labels: Vec<String>,
    pub rbar: f64,
    pub rows: Vec<SweepRow>,
}

/// Solves the robust program for every `δ` in the grid (sorted ascending).
///
/// Failed rows carry the error and leave the other fields empty.
pub fn diversification_sweep(
    samples: &ReturnsMatrix,
    delta_grid: &[f64],
    p: f64,
    norm: GroundNorm,
    settings: &SolverSettings,
) -> Result<SweepTable> {
    let grid = check_grid(delta_grid)?;
    settings.validate()?;
    BallSpec::new(p, 0.0, norm)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut rbar = 0.0;
    for delta in grid {
        let solved = epsilon_from_delta(samples, delta).and_then(|rule| {
            rbar = rule.rbar;
            let ball = BallSpec::new(p, rule.epsilon, norm)?;
            Ok((rule.epsilon, solve_wkelly(samples, &ball, settings)))
        });
        let row = match solved {
            Ok((epsilon, Ok(sol))) => SweepRow {
                delta,
                epsilon,
                status: Some(sol.status),
                herfindahl: Some(sol.weights.herfindahl()),
                entropy: Some(sol.weights.entropy()),
                weights: Some(sol.weights),
                objective: Some(sol.objective),
                error: None,
            },
            Ok((epsilon, Err(e))) => failed_row(delta, epsilon, e),
            Err(e) => failed_row(delta, f64::NAN, e),
        };
        rows.push(row);
    }
    Ok(SweepTable {
        asset_labels: samples.asset_labels().to_vec(),
        rbar,
        rows,
    })
}

fn failed_row(delta: f64, epsilon: f64, e: Error) -> SweepRow {
    let status = match &e {
        Error::SolverFailure { status, .. } => Some(*status),
        _ => None,
    };
    SweepRow {
        delta,
        epsilon,
        status,
        weights: None,
        objective: None,
        herfindahl: None,
        entropy: None,
        error: Some(e.to_string()),
    }
}

impl SweepTable {
    /// Wide CSV: `delta,epsilon,status,objective,herfindahl,entropy,w_<label>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["delta", "epsilon", "status", "objective", "herfindahl", "entropy"]
            .map(String::from)
            .to_vec();
        header.extend(self.asset_labels.iter().map(|l| format!("w_{l}")));
        w.write_record(&header).map_err(csv_io)?;
        let opt = |x: Option<f64>| x.map(format_f64).unwrap_or_default();
        for row in &self.rows {
            let status = match (&row.status, &row.error) {
                (_, Some(_)) => "failed".to_string(),
                (Some(s), None) => serde_json::to_value(s)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                (None, None) => String::new(),
            };
            let mut rec = vec![format_f64(row.delta), format_f64(row.epsilon), status];
            rec.extend([opt(row.objective), opt(row.herfindahl), opt(row.entropy)]);
            match &row.weights {
                Some(ws) => rec.extend(ws.as_slice().iter().map(|x| format_f64(*x))),
                None => rec.extend(self.asset_labels.iter().map(|_| String::new())),
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e,
        })
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub universe: PriceTable,
    pub subset_size: usize,
    pub train_periods: usize,
    /// First date of the test window; defaults to the period right after
    /// the first `train_periods` periods.
    pub test_start: Option<NaiveDate>,
    /// Last date of the test window; defaults to the end of the data.
    pub test_end: Option<NaiveDate>,
    pub trials: usize,
    pub delta_grid: Vec<f64>,
    pub seed: u64,
    pub p: f64,
    pub norm: GroundNorm,
    pub settings: SolverSettings,
    pub periods_per_year: u32,
}

impl StudyConfig {
    pub fn new(universe: PriceTable) -> Self {
        Self {
            universe,
            subset_size: 10,
            train_periods: 252,
            test_start: None,
            test_end: None,
            trials: 1000,
            delta_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            seed: 0,
            p: 2.0,
            norm: GroundNorm::L2,
            settings: SolverSettings::default(),
            periods_per_year: crate::backtest::DEFAULT_PERIODS_PER_YEAR,
        }
    }

    /// Return periods `1..=T` (period `t` ends at price row `t`) used for
    /// training and testing, as half-open price-row ranges.
    fn windows(&self) -> Result<Windows> {
        let dates = self.universe.dates();
        let t_count = self.universe.n_periods();
        if self.train_periods == 0 {
            return Err(Error::InvalidConfig("training window must be at least one period".into()));
        }
        let first_test = match self.test_start {
            Some(d) => (1..=t_count).find(|&t| dates[t] >= d).ok_or_else(|| {
                Error::InsufficientData(format!("no periods on or after test start {d}"))
            })?,
            None => self.train_periods + 1,
        };
        let last_test = match self.test_end {
            Some(d) => (1..=t_count).rev().find(|&t| dates[t] <= d).unwrap_or(0),
            None => t_count,
        };
        if first_test > t_count || last_test < first_test {
            return Err(Error::InsufficientData(format!(
                "test window is empty ({} periods available after training)",
                t_count.saturating_sub(self.train_periods)
            )));
        }
        if first_test <= self.train_periods {
            return Err(Error::InsufficientData(format!(
                "{} training periods requested but only {} precede the test window",
                self.train_periods,
                first_test - 1
            )));
        }
        let train_first = first_test - self.train_periods;
        Ok(Windows {
            train_rows: (train_first - 1, first_test),
            test_rows: (first_test - 1, last_test + 1),
        })
    }

    fn validate(&self) -> Result<(Windows, Vec<f64>)> {
        let n = self.universe.n_assets();
        if self.subset_size == 0 || self.subset_size > n {
            return Err(Error::InvalidConfig(format!(
                "subset size {} must be between 1 and the universe size {n}",
                self.subset_size
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        if self.periods_per_year == 0 {
            return Err(Error::InvalidConfig("periods per year must be at least 1".into()));
        }
        self.settings.validate()?;
        BallSpec::new(self.p, 0.0, self.norm)?;
        let grid = check_grid(&self.delta_grid)?;
        Ok((self.windows()?, grid))
    }
}

#[derive(Debug, Clone, Copy)]
struct Windows {
    train_rows: (usize, usize),
    test_rows: (usize, usize),
}

/// Independent RNG stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Sorted asset indices drawn without replacement for `trial`.
pub fn trial_subset(seed: u64, trial: u64, universe: usize, subset_size: usize) -> Vec<usize> {
    let mut rng = trial_rng(seed, trial);
    let mut idx = sample(&mut rng, universe, subset_size).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialCell {
    pub trial: usize,
    pub delta: f64,
    /// `kelly` for `δ = 0`, `wkelly` otherwise.
    pub label: &'static str,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub epsilon: f64,
    pub assets: Vec<String>,
    pub weights: Option<SimplexWeights>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxplotStats {
    pub count: usize,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub min: f64,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub q1: f64,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub median: f64,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub q3: f64,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub max: f64,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub mean: f64,
}

fn median_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Five-number summary plus mean; `None` for an empty sample.
pub fn boxplot_stats(values: &[f64]) -> Option<BoxplotStats> {
    if values.is_empty() {
        return None;
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let half = n.div_ceil(2);
    let (lower, upper) = (&x[..half], &x[n - half..]);
    Some(BoxplotStats {
        count: n,
        min: x[0],
        q1: median_sorted(lower),
        median: median_sorted(&x),
        q3: median_sorted(upper),
        max: x[n - 1],
        mean: x.iter().sum::<f64>() / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: &'static str,
    pub stats: Option<BoxplotStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaSummary {
    pub delta: f64,
    pub label: &'static str,
    pub succeeded: usize,
    pub failed: usize,
    pub metrics: Vec<MetricSummary>,
    pub band: Option<BandSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyMetadata {
    pub seed: u64,
    pub trials: usize,
    pub subset_size: usize,
    pub universe_size: usize,
    pub train_periods: usize,
    pub test_periods: usize,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub delta_grid: Vec<f64>,
    pub p: f64,
    pub norm: GroundNorm,
    pub periods_per_year: u32,
    pub quartile_method: &'static str,
    pub radius_rule: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub metadata: StudyMetadata,
    /// Ordered by trial, then by `δ`.
    pub cells: Vec<TrialCell>,
    /// One per `δ`, ascending.
    pub summaries: Vec<DeltaSummary>,
}

fn label_for(delta: f64) -> &'static str {
    if delta == 0.0 {
        "kelly"
    } else {
        "wkelly"
    }
}

/// Runs `trials` independent random-subset backtests.
///
/// Each trial draws its assets from its own RNG stream, fits one portfolio
/// per `δ` on the training window (radius scaled from that trial's training
/// returns) and backtests it on the test window. Trials run in parallel; the
/// report does not depend on the thread count.
pub fn random_subset_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let (win, grid) = cfg.validate()?;
    let train_table = cfg.universe.slice_rows(win.train_rows.0, win.train_rows.1)?;
    let test_table = cfg.universe.slice_rows(win.test_rows.0, win.test_rows.1)?;
    let train_all = log_returns(&train_table)?;
    let test_all = simple_returns(&test_table)?;
    let n = cfg.universe.n_assets();

    let per_trial: Vec<Vec<(TrialCell, Option<Trajectory>)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let subset = trial_subset(cfg.seed, trial as u64, n, cfg.subset_size);
            run_trial(cfg, trial, &subset, &grid, &train_all, &test_all)
        })
        .collect();

    let mut cells = Vec::with_capacity(cfg.trials * grid.len());
    let mut paths: Vec<Vec<Trajectory>> = vec![Vec::new(); grid.len()];
    let mut failed = vec![0usize; grid.len()];
    for trial_cells in per_trial {
        for (k, (cell, path)) in trial_cells.into_iter().enumerate() {
            match path {
                Some(p) => paths[k].push(p),
                None => failed[k] += 1,
            }
            cells.push(cell);
        }
    }

    let mut summaries = Vec::with_capacity(grid.len());
    for (k, &delta) in grid.iter().enumerate() {
        let ok: Vec<&MetricsReport> = cells
            .iter()
            .skip(k)
            .step_by(grid.len())
            .filter_map(|c| c.metrics.as_ref())
            .collect();
        let metrics = MetricsReport::METRIC_NAMES
            .iter()
            .enumerate()
            .map(|(m, &name)| MetricSummary {
                metric: name,
                stats: boxplot_stats(&ok.iter().map(|r| r.values()[m]).collect::<Vec<_>>()),
            })
            .collect();
        let band = if paths[k].is_empty() {
            None
        } else {
            Some(aggregate_trajectories(&paths[k])?)
        };
        summaries.push(DeltaSummary {
            delta,
            label: label_for(delta),
            succeeded: ok.len(),
            failed: failed[k],
            metrics,
            band,
        });
    }

    let dates = cfg.universe.dates();
    let metadata = StudyMetadata {
        seed: cfg.seed,
        trials: cfg.trials,
        subset_size: cfg.subset_size,
        universe_size: n,
        train_periods: train_all.n_samples(),
        test_periods: test_all.n_samples(),
        train_start: dates[win.train_rows.0 + 1],
        train_end: dates[win.train_rows.1 - 1],
        test_start: dates[win.test_rows.0 + 1],
        test_end: dates[win.test_rows.1 - 1],
        delta_grid: grid,
        p: cfg.p,
        norm: cfg.norm,
        periods_per_year: cfg.periods_per_year,
        quartile_method: QUARTILE_METHOD,
        radius_rule: "epsilon = delta * mean absolute training log-return of the trial's assets",
    };
    Ok(StudyReport {
        metadata,
        cells,
        summaries,
    })
}

fn run_trial(
    cfg: &StudyConfig,
    trial: usize,
    subset: &[usize],
    grid: &[f64],
    train_all: &ReturnsMatrix,
    test_all: &ReturnsMatrix,
) -> Vec<(TrialCell, Option<Trajectory>)> {
    let assets: Vec<String> = subset.iter().map(|&i| cfg.universe.labels()[i].clone()).collect();
    let data = train_all
        .select_assets(subset)
        .and_then(|train| Ok((train, test_all.select_assets(subset)?)));
    grid.iter()
        .map(|&delta| {
            let mut cell = TrialCell {
                trial,
                delta,
                label: label_for(delta),
                epsilon: f64::NAN,
                assets: assets.clone(),
                weights: None,
                metrics: None,
                error: None,
            };
            let outcome = data.as_ref().map_err(ToString::to_string).and_then(|(train, test)| {
                let mut fit = || -> Result<_> {
                    let rule = epsilon_from_delta(train, delta)?;
                    cell.epsilon = rule.epsilon;
                    let ball = BallSpec::new(cfg.p, rule.epsilon, cfg.norm)?;
                    let sol = solve_wkelly(train, &ball, &cfg.settings)?;
                    let path = run_constant_mix(&sol.weights, test)?;
                    let metrics = performance_metrics(&path, cfg.periods_per_year)?;
                    Ok((sol.weights, metrics, path))
                };
                fit().map_err(|e| e.to_string())
            });
            match outcome {
                Ok((w, m, path)) => {
                    cell.weights = Some(w);
                    cell.metrics = Some(m);
                    (cell, Some(path))
                }
                Err(e) => {
                    cell.error = Some(e);
                    (cell, None)
                }
            }
        })
        .collect()
}

impl StudyReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidConfig(format!("serialization failed: {e}")))
    }

    /// Long CSV: `trial,delta,metric,value`, successful cells only.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "delta", "metric", "value"]).map_err(csv_io)?;
        for cell in &self.cells {
            let Some(m) = &cell.metrics else { continue };
            for (name, value) in MetricsReport::METRIC_NAMES.iter().zip(m.values()) {
                w.write_record([
                    cell.trial.to_string(),
                    format_f64(cell.delta),
                    name.to_string(),
                    format_f64(value),
                ])
                .map_err(csv_io)?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e,
        })
    }

    /// Band CSV: `delta,t,mean,stdev`.
    pub fn write_bands_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "t", "mean", "stdev"]).map_err(csv_io)?;
        for s in &self.summaries {
            let Some(band) = &s.band else { continue };
            for (t, (m, sd)) in band.mean.iter().zip(&band.stdev).enumerate() {
                w.write_record([format_f64(s.delta), t.to_string(), format_f64(*m), format_f64(*sd)])
                    .map_err(csv_io)?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e,
        })
    }

    pub fn summary(&self, delta: f64) -> Option<&DeltaSummary> {
        self.summaries.iter().find(|s| s.delta == delta)
    }
}

impl DeltaSummary {
    pub fn metric(&self, name: &str) -> Option<&BoxplotStats> {
        self.metrics.iter().find(|m| m.metric == name).and_then(|m| m.stats.as_ref())
    }
}
