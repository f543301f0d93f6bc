//! Constant-proportions backtests and their performance metrics.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::domain::{ReturnKind, ReturnsMatrix, SimplexWeights};
use crate::error::{Error, Result};
use crate::extended::{format_f64, serialize_f64_ext};

pub const DEFAULT_PERIODS_PER_YEAR: u32 = 252;

/// Portfolio value path starting from 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `V_0 = 1, V_1, ..., V_T`
    pub values: Vec<f64>,
    /// Portfolio simple return of each period.
    pub period_returns: Vec<f64>,
}

impl Trajectory {
    pub fn periods(&self) -> usize {
        self.period_returns.len()
    }

    /// Builds a trajectory from period returns, checking for ruin.
    pub fn from_returns(period_returns: Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(period_returns.len() + 1);
        values.push(1.0);
        let mut v = 1.0;
        for (t, r) in period_returns.iter().enumerate() {
            if !(1.0 + r > 0.0) {
                return Err(Error::Ruin { period: t + 1 });
            }
            v *= 1.0 + r;
            values.push(v);
        }
        Ok(Self { values, period_returns })
    }
}

/// Rebalances to `w` every period.
pub fn run_constant_mix(w: &SimplexWeights, returns: &ReturnsMatrix) -> Result<Trajectory> {
    returns.require_kind(ReturnKind::Simple)?;
    if w.len() != returns.n_assets() {
        return Err(Error::DimensionMismatch {
            what: "weights vs assets",
            expected: returns.n_assets(),
            found: w.len(),
        });
    }
    let period_returns = returns
        .samples()
        .map(|row| row.iter().zip(w.as_slice()).map(|(r, w)| r * w).sum())
        .collect();
    Trajectory::from_returns(period_returns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "serialize_f64_ext")]
    pub annualized_return: f64,
    #[serde(serialize_with = "serialize_f64_ext")]
    pub annualized_volatility: f64,
    /// `+∞` for a rising path with zero volatility.
    #[serde(serialize_with = "serialize_f64_ext")]
    pub sharpe_ratio: f64,
    pub max_drawdown: f64,
    pub log_final_value: f64,
    /// `ln(V_T) / T`
    pub growth_rate: f64,
    pub zero_volatility: bool,
}

impl MetricsReport {
    pub const METRIC_NAMES: [&'static str; 6] = [
        "annualized_return",
        "annualized_volatility",
        "sharpe_ratio",
        "max_drawdown",
        "log_final_value",
        "growth_rate",
    ];

    /// Values in the order of [`Self::METRIC_NAMES`].
    pub fn values(&self) -> [f64; 6] {
        [
            self.annualized_return,
            self.annualized_volatility,
            self.sharpe_ratio,
            self.max_drawdown,
            self.log_final_value,
            self.growth_rate,
        ]
    }
}

pub fn performance_metrics(tr: &Trajectory, periods_per_year: u32) -> Result<MetricsReport> {
    let t_count = tr.periods();
    if t_count < 1 || tr.values.len() != t_count + 1 {
        return Err(Error::InsufficientData("a trajectory needs at least one period".into()));
    }
    if periods_per_year < 1 {
        return Err(Error::InvalidConfig("periods per year must be at least 1".into()));
    }
    let ppy = f64::from(periods_per_year);
    let t = t_count as f64;
    let log_final_value: f64 = tr.period_returns.iter().map(|r| r.ln_1p()).sum();
    let growth_rate = log_final_value / t;
    let annualized_return = (growth_rate * ppy).exp_m1();

    // Sample standard deviation (n − 1); a single period has none.
    let vol = if t_count > 1 {
        let mean = tr.period_returns.iter().sum::<f64>() / t;
        let ss: f64 = tr.period_returns.iter().map(|r| (r - mean).powi(2)).sum();
        (ss / (t - 1.0)).sqrt() * ppy.sqrt()
    } else {
        0.0
    };
    let zero_volatility = vol == 0.0;
    let sharpe_ratio = if zero_volatility {
        if annualized_return > 0.0 {
            f64::INFINITY
        } else if annualized_return < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        annualized_return / vol
    };

    Ok(MetricsReport {
        annualized_return,
        annualized_volatility: vol,
        sharpe_ratio,
        max_drawdown: max_drawdown(&tr.values),
        log_final_value,
        growth_rate,
        zero_volatility,
    })
}

/// `max_t (peak_t − V_t) / peak_t` over the path, `V_0` included.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    worst
}

/// Per-period mean and population standard deviation of a set of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSummary {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

pub fn aggregate_trajectories(trs: &[Trajectory]) -> Result<BandSummary> {
    let first = trs
        .first()
        .ok_or_else(|| Error::InsufficientData("no trajectories to aggregate".into()))?;
    let len = first.values.len();
    if let Some(bad) = trs.iter().position(|t| t.values.len() != len) {
        return Err(Error::LengthMismatch(format!(
            "trajectory {bad} has {} values, expected {len}",
            trs[bad].values.len()
        )));
    }
    let k = trs.len() as f64;
    let mut mean = vec![0.0; len];
    let mut stdev = vec![0.0; len];
    for (t, (m, s)) in mean.iter_mut().zip(stdev.iter_mut()).enumerate() {
        // Welford keeps the result stable for long, nearly constant columns.
        let (mut mu, mut m2) = (0.0, 0.0);
        for (i, tr) in trs.iter().enumerate() {
            let x = tr.values[t];
            let d = x - mu;
            mu += d / (i + 1) as f64;
            m2 += d * (x - mu);
        }
        *m = mu;
        *s = (m2 / k).max(0.0).sqrt();
    }
    Ok(BandSummary { mean, stdev })
}

impl BandSummary {
    /// CSV with header `t,mean,stdev`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e.into(),
        };
        w.write_record(["t", "mean", "stdev"]).map_err(io)?;
        for (t, (m, s)) in self.mean.iter().zip(&self.stdev).enumerate() {
            w.write_record([t.to_string(), format_f64(*m), format_f64(*s)]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<writer>"),
            source: e,
        })
    }
}
