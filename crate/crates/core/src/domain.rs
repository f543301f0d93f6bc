//! Validated data types shared across the solvers, the oracle and the
//! experiment drivers.
//!
//! Returns are always per period. Nothing in here annualizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Σw − 1|` accepted by [`make_weights`].
pub const WEIGHT_SUM_TOL: f64 = 1e-8;
/// Entries above `-NEGATIVE_WEIGHT_TOL` are accepted (and clamped to zero).
pub const NEGATIVE_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    Log,
    Simple,
}

/// N×n matrix of per-period returns. Row `j` is the sample `r̂_j`, so the rows
/// are the atoms of the empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    values: Vec<f64>,
    n_samples: usize,
    n_assets: usize,
    kind: ReturnKind,
    asset_labels: Vec<String>,
}

impl ReturnsMatrix {
    /// Builds a matrix from row-major `values`.
    pub fn new(
        values: Vec<f64>,
        n_samples: usize,
        n_assets: usize,
        kind: ReturnKind,
        asset_labels: Vec<String>,
    ) -> Result<Self> {
        if n_samples == 0 || n_assets == 0 {
            return Err(Error::InvalidReturns(format!(
                "need at least one sample and one asset, got {n_samples}x{n_assets}"
            )));
        }
        if values.len() != n_samples * n_assets {
            return Err(Error::DimensionMismatch {
                what: "returns values",
                expected: n_samples * n_assets,
                found: values.len(),
            });
        }
        if asset_labels.len() != n_assets {
            return Err(Error::DimensionMismatch {
                what: "asset labels",
                expected: n_assets,
                found: asset_labels.len(),
            });
        }
        for (k, &x) in values.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidReturns(format!(
                    "non-finite entry at sample {}, asset {}",
                    k / n_assets,
                    k % n_assets
                )));
            }
            if kind == ReturnKind::Simple && x <= -1.0 {
                return Err(Error::DomainError(format!(
                    "simple return {x} at sample {}, asset {} is not above -1",
                    k / n_assets,
                    k % n_assets
                )));
            }
        }
        Ok(Self {
            values,
            n_samples,
            n_assets,
            kind,
            asset_labels,
        })
    }

    /// Builds a matrix from rows, labelling assets `A1..An`.
    pub fn from_rows(rows: &[Vec<f64>], kind: ReturnKind) -> Result<Self> {
        let n_assets = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_assets) {
            return Err(Error::DimensionMismatch {
                what: "row length",
                expected: n_assets,
                found: bad.len(),
            });
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(values, rows.len(), n_assets, kind, default_labels(n_assets))
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn kind(&self) -> ReturnKind {
        self.kind
    }

    pub fn asset_labels(&self) -> &[String] {
        &self.asset_labels
    }

    /// Row-major storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_assets..(j + 1) * self.n_assets]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_assets)
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.n_assets + i]
    }

    /// Keeps the listed asset columns, in the given order.
    pub fn select_assets(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_assets) {
            return Err(Error::InvalidConfig(format!(
                "asset index {bad} out of range for {} assets",
                self.n_assets
            )));
        }
        let values = self
            .samples()
            .flat_map(|row| columns.iter().map(move |&c| row[c]))
            .collect();
        let labels = columns.iter().map(|&c| self.asset_labels[c].clone()).collect();
        Self::new(values, self.n_samples, columns.len(), self.kind, labels)
    }

    /// Keeps samples `start..end`.
    pub fn slice_samples(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_samples {
            return Err(Error::InvalidConfig(format!(
                "sample range {start}..{end} invalid for {} samples",
                self.n_samples
            )));
        }
        let values = self.values[start * self.n_assets..end * self.n_assets].to_vec();
        Self::new(
            values,
            end - start,
            self.n_assets,
            self.kind,
            self.asset_labels.clone(),
        )
    }

    pub(crate) fn require_kind(&self, kind: ReturnKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidReturns(format!(
                "expected {kind:?} returns, got {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

pub(crate) fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i}")).collect()
}

/// Elementwise `r = ln(1 + R)` or `R = exp(r) − 1`; labels are preserved.
pub fn convert_returns(m: &ReturnsMatrix, target: ReturnKind) -> Result<ReturnsMatrix> {
    if m.kind == target {
        return Ok(m.clone());
    }
    let values = match target {
        ReturnKind::Log => m
            .values
            .iter()
            .map(|&x| {
                if x <= -1.0 {
                    Err(Error::DomainError(format!(
                        "simple return {x} has no log-return"
                    )))
                } else {
                    Ok(x.ln_1p())
                }
            })
            .collect::<Result<Vec<_>>>()?,
        ReturnKind::Simple => m.values.iter().map(|&x| x.exp_m1()).collect(),
    };
    ReturnsMatrix::new(
        values,
        m.n_samples,
        m.n_assets,
        target,
        m.asset_labels.clone(),
    )
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "uniform weights need at least one asset");
        Self(vec![1.0 / n as f64; n])
    }

    /// All mass on asset `i`.
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(i < n, "vertex index out of range");
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Σ w_i².
    pub fn herfindahl(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum()
    }

    /// −Σ w_i ln w_i with 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &SimplexWeights) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for SimplexWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Validates a raw vector as simplex weights. Rejects rather than
/// renormalizes; entries in `[-1e-12, 0)` are clamped to zero.
pub fn make_weights(raw: &[f64]) -> Result<SimplexWeights> {
    if raw.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: 1,
            found: 0,
        });
    }
    let mut w = Vec::with_capacity(raw.len());
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() || value < -NEGATIVE_WEIGHT_TOL {
            return Err(Error::NegativeWeight { index, value });
        }
        w.push(value.max(0.0));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::SumMismatch { sum });
    }
    Ok(SimplexWeights(w))
}

/// Ground norm on log-return space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundNorm {
    L2,
    L1,
    Linf,
}

impl GroundNorm {
    /// The dual norm; the pairing is fixed.
    pub fn dual(self) -> GroundNorm {
        match self {
            GroundNorm::L2 => GroundNorm::L2,
            GroundNorm::L1 => GroundNorm::Linf,
            GroundNorm::Linf => GroundNorm::L1,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            GroundNorm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            GroundNorm::L1 => x.iter().map(|v| v.abs()).sum(),
            GroundNorm::Linf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroundNorm::L2 => "l2",
            GroundNorm::L1 => "l1",
            GroundNorm::Linf => "linf",
        }
    }
}

impl std::str::FromStr for GroundNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(GroundNorm::L2),
            "l1" => Ok(GroundNorm::L1),
            "linf" => Ok(GroundNorm::Linf),
            other => Err(Error::InvalidConfig(format!("unknown norm `{other}`"))),
        }
    }
}

/// Type-p Wasserstein ball of radius `epsilon` around the empirical
/// distribution of log-returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    p: f64,
    epsilon: f64,
    norm: GroundNorm,
}

impl BallSpec {
    pub fn new(p: f64, epsilon: f64, norm: GroundNorm) -> Result<Self> {
        if !p.is_finite() || p < 1.0 {
            return Err(Error::UnsupportedOrder(p));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidBall(format!(
                "radius must be finite and non-negative, got {epsilon}"
            )));
        }
        Ok(Self { p, epsilon, norm })
    }

    /// p = 2 with the Euclidean ground norm.
    pub fn type2(epsilon: f64) -> Result<Self> {
        Self::new(2.0, epsilon, GroundNorm::L2)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn norm(&self) -> GroundNorm {
        self.norm
    }

    pub fn dual_norm(&self) -> GroundNorm {
        self.norm.dual()
    }

    pub fn is_order_one(&self) -> bool {
        self.p == 1.0
    }

    /// q = p/(p−1); `None` for p = 1.
    pub fn conjugate_exponent(&self) -> Option<f64> {
        (self.p > 1.0).then(|| self.p / (self.p - 1.0))
    }

    /// Coefficient (p−1)·p^{−p/(p−1)} = 1/(q·p^{q−1}) of the perspective term.
    pub fn perspective_coefficient(&self) -> Option<f64> {
        self.conjugate_exponent()
            .map(|q| 1.0 / (q * self.p.powf(q - 1.0)))
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.p, epsilon, self.norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Optimal `(w, λ, {v^(j)})` of the robust program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustSolution {
    pub weights: SimplexWeights,
    /// `+∞` when the radius is zero.
    pub lambda: f64,
    /// Row `j` is `v^(j)`.
    pub v: Vec<Vec<f64>>,
    /// Worst-case expected log-growth per period.
    pub objective: f64,
    pub status: SolverStatus,
    pub duality_gap_estimate: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_rel: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
    pub floor_w: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_rel: 1e-7,
            tol_feas: 1e-8,
            max_iter: 10_000,
            floor_w: 1e-12,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = self.tol_rel > 0.0 && self.tol_feas > 0.0 && self.floor_w > 0.0;
        if !positive || self.max_iter == 0 || self.tol_rel >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "solver settings must be positive with tol_rel < 1: {self:?}"
            )));
        }
        Ok(())
    }
}
