//! Seeded synthetic price universes with heavy-tailed log-returns.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

use crate::data_ingest::PriceTable;
use crate::error::{Error, Result};

/// Independent Student-t log-returns, rescaled to unit variance and then
/// multiplied by a per-asset volatility and shifted by a per-asset drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    pub n_periods: usize,
    pub dof: f64,
    /// Per-period volatility range; each asset draws uniformly inside it.
    pub vol_range: (f64, f64),
    /// Per-period drift range; each asset draws uniformly inside it.
    pub drift_range: (f64, f64),
    pub seed: u64,
    pub start: NaiveDate,
}

impl SyntheticSpec {
    pub fn new(n_assets: usize, n_periods: usize, seed: u64) -> Self {
        Self {
            n_assets,
            n_periods,
            dof: 4.0,
            vol_range: (0.006, 0.02),
            drift_range: (-0.0002, 0.0008),
            seed,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
        }
    }
}

pub fn student_t_prices(spec: &SyntheticSpec) -> Result<PriceTable> {
    if spec.n_assets == 0 || spec.n_periods == 0 {
        return Err(Error::InvalidConfig("synthetic universe needs assets and periods".into()));
    }
    if !(spec.dof > 2.0) {
        return Err(Error::InvalidConfig(format!(
            "degrees of freedom must exceed 2 for a finite variance, got {}",
            spec.dof
        )));
    }
    let ordered = |(a, b): (f64, f64)| a <= b && a.is_finite() && b.is_finite();
    if !ordered(spec.vol_range) || spec.vol_range.0 < 0.0 || !ordered(spec.drift_range) {
        return Err(Error::InvalidConfig("invalid volatility or drift range".into()));
    }
    let t_dist = StudentT::new(spec.dof).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let unit = (spec.dof / (spec.dof - 2.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_assets;
    let vols: Vec<f64> = (0..n).map(|_| rng.gen_range(spec.vol_range.0..=spec.vol_range.1)).collect();
    let drifts: Vec<f64> = (0..n).map(|_| rng.gen_range(spec.drift_range.0..=spec.drift_range.1)).collect();

    let rows = spec.n_periods + 1;
    let mut prices = Vec::with_capacity(rows * n);
    let mut last = vec![100.0; n];
    prices.extend_from_slice(&last);
    for _ in 0..spec.n_periods {
        for i in 0..n {
            let r = drifts[i] + vols[i] * t_dist.sample(&mut rng) / unit;
            last[i] *= r.exp();
        }
        prices.extend_from_slice(&last);
    }
    let dates = (0..rows as u64)
        .map(|d| spec.start.checked_add_days(Days::new(d)))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidConfig("date range overflow".into()))?;
    let width = n.to_string().len();
    let labels = (1..=n).map(|i| format!("S{i:0width$}")).collect();
    PriceTable::new(dates, prices, labels)
}

/// Ten assets over 252 periods.
pub fn ten_asset_fixture() -> PriceTable {
    student_t_prices(&SyntheticSpec::new(10, 252, 20_240_611)).expect("fixture spec is valid")
}

/// Twenty assets over 310 periods, enough for a 60-period training window
/// followed by a 250-period test window.
pub fn study_universe(seed: u64) -> PriceTable {
    student_t_prices(&SyntheticSpec::new(20, 310, seed)).expect("universe spec is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_ingest::log_returns;

    #[test]
    fn seeded_and_shaped() {
        let a = student_t_prices(&SyntheticSpec::new(3, 50, 7)).unwrap();
        let b = student_t_prices(&SyntheticSpec::new(3, 50, 7)).unwrap();
        let c = student_t_prices(&SyntheticSpec::new(3, 50, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.n_periods(), 50);
        assert_eq!(a.labels(), ["S1", "S2", "S3"]);
        let f = ten_asset_fixture();
        assert_eq!((f.n_assets(), f.n_periods()), (10, 252));
        assert_eq!(f.labels()[9], "S10");
    }

    #[test]
    fn volatility_is_in_range() {
        let pt = student_t_prices(&SyntheticSpec::new(4, 20_000, 3)).unwrap();
        let r = log_returns(&pt).unwrap();
        for i in 0..4 {
            let col: Vec<f64> = (0..r.n_samples()).map(|j| r.get(j, i)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!((0.005..0.022).contains(&sd), "{sd}");
        }
    }
}
