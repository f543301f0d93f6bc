//! Wasserstein-Kelly portfolios.
//!
//! The robust growth problem over a type-p Wasserstein ball is solved through
//! its finite convex reformulation in `(w, v^(j), λ)`:
//!
//! ```text
//! max (1/N) Σ_j [ r̂_jᵀv_j + Σ_i v_ji ln(w_i/v_ji) − c λ ‖v_j/λ‖_*^q ] − λεᵖ
//! ```
//!
//! with `w` and every `v_j` on the simplex, `λ ≥ 0`, `q = p/(p−1)` and
//! `c = (p−1)p^{−q}`. For `p = 1` the power term becomes the constraint
//! `‖v_j‖_* ≤ λ`.

mod ipm;

use serde::Serialize;

use crate::domain::{
    make_weights, BallSpec, ReturnKind, ReturnsMatrix, RobustSolution, SolverSettings,
    SolverStatus,
};
use crate::error::{BestIterate, Error, Result};
use crate::extended::ExtReal;
use crate::inner_oracle::{inner_min_value, robust_objective, InnerEvalConfig};
use crate::solver_kelly::solve_kelly;

/// Tolerance on equality and sign constraints used by the objective evaluator.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    pub weights: usize,
    /// `v` is `v_rows × v_cols`, one row per sample.
    pub v_rows: usize,
    pub v_cols: usize,
    pub lambda: usize,
}

impl VariableLayout {
    pub fn total(&self) -> usize {
        self.weights + self.v_rows * self.v_cols + self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum ObjectiveTerm {
    /// `r̂_jᵀ v_j`
    Linear,
    /// `Σ_i v_ji ln(w_i / v_ji)`
    Entropy,
    /// `−coefficient · λ^{1−exponent} ‖v_j‖_*^exponent`
    PerspectivePower { coefficient: f64, exponent: f64 },
    /// `−λ · radius_power`
    Radius { radius_power: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "constraint", content = "sample", rename_all = "snake_case")]
pub enum Constraint {
    WeightSimplex,
    /// `v_j ≥ 0`, `Σ_i v_ji = 1`.
    SampleSimplex(usize),
    LambdaNonNegative,
    /// `‖v_j‖_* ≤ λ`.
    DualNormBound(usize),
}

/// Symbolic description of the robust program for one data set and ball.
#[derive(Debug, Clone)]
pub struct ProgramSpec {
    pub samples: ReturnsMatrix,
    pub ball: BallSpec,
    pub layout: VariableLayout,
    pub objective_terms: Vec<ObjectiveTerm>,
    pub constraints: Vec<Constraint>,
}

pub fn build_program(samples: &ReturnsMatrix, ball: &BallSpec) -> Result<ProgramSpec> {
    samples.require_kind(ReturnKind::Log)?;
    if !(ball.p() >= 1.0) {
        return Err(Error::UnsupportedOrder(ball.p()));
    }
    let (n_samples, n) = (samples.n_samples(), samples.n_assets());
    let mut objective_terms = vec![ObjectiveTerm::Linear, ObjectiveTerm::Entropy];
    if let (Some(exponent), Some(coefficient)) =
        (ball.conjugate_exponent(), ball.perspective_coefficient())
    {
        objective_terms.push(ObjectiveTerm::PerspectivePower {
            coefficient,
            exponent,
        });
    }
    objective_terms.push(ObjectiveTerm::Radius {
        radius_power: ball.epsilon().powf(ball.p()),
    });
    let mut constraints = vec![Constraint::WeightSimplex];
    constraints.extend((0..n_samples).map(Constraint::SampleSimplex));
    constraints.push(Constraint::LambdaNonNegative);
    if ball.is_order_one() {
        constraints.extend((0..n_samples).map(Constraint::DualNormBound));
    }
    Ok(ProgramSpec {
        samples: samples.clone(),
        ball: *ball,
        layout: VariableLayout {
            weights: n,
            v_rows: n_samples,
            v_cols: n,
            lambda: 1,
        },
        objective_terms,
        constraints,
    })
}

/// `Σ_i v_i ln(w_i / v_i)`: zero entries of `v` contribute 0, a positive
/// `v_i` against `w_i = 0` gives `−∞`.
pub fn entropy_term(v: &[f64], w: &[f64]) -> ExtReal {
    let mut total = 0.0;
    for (&vi, &wi) in v.iter().zip(w) {
        if vi == 0.0 {
            continue;
        }
        if wi <= 0.0 {
            return ExtReal::NegInf;
        }
        total += vi * (wi / vi).ln();
    }
    ExtReal::Finite(total)
}

/// `c λ ‖v/λ‖_*^q` for `p > 1`. At `λ = 0` it is 0 for `v = 0` and `+∞`
/// otherwise; at `λ = +∞` it vanishes.
pub fn perspective_term(v: &[f64], lambda: f64, ball: &BallSpec) -> Result<ExtReal> {
    let (Some(q), Some(c)) = (ball.conjugate_exponent(), ball.perspective_coefficient()) else {
        return Err(Error::UnsupportedOrder(ball.p()));
    };
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("multiplier must be non-negative, got {lambda}")));
    }
    let norm = ball.dual_norm().eval(v);
    if lambda == 0.0 {
        return Ok(if norm == 0.0 { ExtReal::Finite(0.0) } else { ExtReal::PosInf });
    }
    if lambda.is_infinite() {
        return Ok(ExtReal::Finite(0.0));
    }
    Ok(ExtReal::Finite(c * lambda * (norm / lambda).powf(q)))
}

impl ProgramSpec {
    /// Contribution of sample `j` (before averaging and without the radius
    /// term). `−∞` when the candidate is infeasible for that sample.
    pub fn sample_value(&self, j: usize, w: &[f64], v: &[f64], lambda: f64) -> Result<ExtReal> {
        let rhat = self.samples.sample(j);
        if v.len() != rhat.len() || w.len() != rhat.len() {
            return Err(Error::DimensionMismatch {
                what: "program variables vs assets",
                expected: rhat.len(),
                found: v.len().min(w.len()),
            });
        }
        let sum: f64 = v.iter().sum();
        if v.iter().any(|&x| x < -FEAS_TOL) || (sum - 1.0).abs() > FEAS_TOL || lambda.is_nan() {
            return Ok(ExtReal::NegInf);
        }
        if lambda < 0.0 {
            return Ok(ExtReal::NegInf);
        }
        let linear: f64 = rhat.iter().zip(v).map(|(r, v)| r * v).sum();
        let ExtReal::Finite(entropy) = entropy_term(v, w) else {
            return Ok(ExtReal::NegInf);
        };
        let penalty = if self.ball.is_order_one() {
            let norm = self.ball.dual_norm().eval(v);
            if norm > lambda + FEAS_TOL * lambda.max(1.0) {
                return Ok(ExtReal::NegInf);
            }
            0.0
        } else {
            match perspective_term(v, lambda, &self.ball)? {
                ExtReal::Finite(x) => x,
                _ => return Ok(ExtReal::NegInf),
            }
        };
        Ok(ExtReal::Finite(linear + entropy - penalty))
    }

    /// Program objective at `(w, v, λ)`; `−∞` off the feasible set.
    pub fn objective(&self, w: &[f64], v: &[Vec<f64>], lambda: f64) -> Result<ExtReal> {
        if v.len() != self.layout.v_rows {
            return Err(Error::DimensionMismatch {
                what: "v rows vs samples",
                expected: self.layout.v_rows,
                found: v.len(),
            });
        }
        if w.iter().any(|&x| x < -FEAS_TOL) || (w.iter().sum::<f64>() - 1.0).abs() > FEAS_TOL {
            return Ok(ExtReal::NegInf);
        }
        let mut total = 0.0;
        for (j, vj) in v.iter().enumerate() {
            match self.sample_value(j, w, vj, lambda)? {
                ExtReal::Finite(x) => total += x,
                other => return Ok(other),
            }
        }
        let radius = self.ball.epsilon().powf(self.ball.p());
        let radius_term = if radius == 0.0 { 0.0 } else { lambda * radius };
        if radius_term.is_infinite() {
            return Ok(ExtReal::NegInf);
        }
        Ok(ExtReal::Finite(total / v.len() as f64 - radius_term))
    }
}

fn gibbs_weights(w: &[f64], r: &[f64]) -> Vec<f64> {
    let m = r.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(r, _)| *r).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = r.iter().zip(w).map(|(r, w)| w * (r - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Solves the Wasserstein-Kelly program.
///
/// A zero radius reduces to the empirical Kelly problem, reported with
/// `λ = +∞`. Otherwise a barrier interior-point method runs on the full
/// program.
pub fn solve_wkelly(
    samples: &ReturnsMatrix,
    ball: &BallSpec,
    settings: &SolverSettings,
) -> Result<RobustSolution> {
    settings.validate()?;
    let program = build_program(samples, ball)?;

    if ball.epsilon() == 0.0 {
        let kelly = solve_kelly(samples, settings)?;
        let w = kelly.weights.as_slice();
        let v = samples.samples().map(|r| gibbs_weights(w, r)).collect();
        return Ok(RobustSolution {
            weights: kelly.weights.clone(),
            lambda: f64::INFINITY,
            v,
            objective: kelly.objective,
            status: SolverStatus::Optimal,
            duality_gap_estimate: kelly.first_order_gap,
            iterations: kelly.iterations,
        });
    }

    let out = ipm::solve(samples, ball, settings);
    let it = out.iterate;
    let sum: f64 = it.w.iter().sum();
    let weights = make_weights(&it.w.iter().map(|x| x / sum).collect::<Vec<_>>())?;
    let v: Vec<Vec<f64>> = it
        .v
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s).collect()
        })
        .collect();
    let objective = program.objective(weights.as_slice(), &v, it.lambda)?.to_f64();
    let solution = RobustSolution {
        weights,
        lambda: it.lambda,
        v,
        objective,
        status: if out.converged { SolverStatus::Optimal } else { SolverStatus::MaxIter },
        duality_gap_estimate: out.gap_bound,
        iterations: out.iterations,
    };
    if !out.converged || !objective.is_finite() {
        return Err(Error::SolverFailure {
            status: SolverStatus::MaxIter,
            best: BestIterate::Robust(Box::new(solution)),
        });
    }
    Ok(solution)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FeasibilityReport {
    pub weight_sum_residual: f64,
    pub min_weight: f64,
    /// Largest `|Σ_i v_ji − 1|` over samples.
    pub v_sum_residual: f64,
    pub min_v: f64,
    pub lambda: f64,
    /// Largest `‖v_j‖_* − λ` (p = 1 only, else 0).
    pub dual_norm_excess: f64,
    pub violations: Vec<String>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub feasibility: FeasibilityReport,
    pub objective: f64,
    pub oracle_objective: Option<f64>,
    /// `|objective − oracle_objective|`
    pub consistency_gap: Option<f64>,
    /// Per sample: oracle inner minimum minus the solution's dual value.
    pub fenchel_residuals: Vec<f64>,
    pub max_fenchel_residual: f64,
    pub failures: Vec<String>,
}

impl CertificateReport {
    /// True when feasible and both gaps are within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.failures.is_empty()
            && self.consistency_gap.is_some_and(|g| g <= tol)
            && self.max_fenchel_residual <= tol
    }
}

pub fn certify_solution(
    sol: &RobustSolution,
    samples: &ReturnsMatrix,
    ball: &BallSpec,
) -> CertificateReport {
    certify_solution_with(sol, samples, ball, &InnerEvalConfig::default())
}

/// Cross-checks a solution against the brute-force oracle. Never fails;
/// problems are listed in the report.
pub fn certify_solution_with(
    sol: &RobustSolution,
    samples: &ReturnsMatrix,
    ball: &BallSpec,
    cfg: &InnerEvalConfig,
) -> CertificateReport {
    let mut report = CertificateReport {
        feasibility: feasibility(sol, ball),
        objective: sol.objective,
        oracle_objective: None,
        consistency_gap: None,
        fenchel_residuals: Vec::new(),
        max_fenchel_residual: f64::INFINITY,
        failures: Vec::new(),
    };
    if sol.status != SolverStatus::Optimal {
        report.failures.push(format!("solution status is {:?}", sol.status));
    }
    report
        .failures
        .extend(report.feasibility.violations.iter().map(|v| format!("infeasible: {v}")));

    let program = match build_program(samples, ball) {
        Ok(p) => p,
        Err(e) => {
            report.failures.push(e.to_string());
            return report;
        }
    };
    if sol.weights.len() != samples.n_assets() || sol.v.len() != samples.n_samples() {
        report.failures.push("solution dimensions do not match the samples".into());
        return report;
    }

    match robust_objective(&sol.weights, samples, ball, cfg) {
        Ok(value) => {
            report.oracle_objective = Some(value);
            report.consistency_gap = Some((sol.objective - value).abs());
        }
        Err(e) => report.failures.push(format!("oracle: {e}")),
    }

    if !(sol.lambda >= 0.0) {
        return report;
    }
    let w = sol.weights.as_slice();
    let mut worst: f64 = 0.0;
    for (j, vj) in sol.v.iter().enumerate() {
        let rhat = samples.sample(j);
        let primal = if sol.lambda.is_infinite() {
            Ok(ExtReal::Finite(
                rhat.iter().zip(w).map(|(r, w)| w * r.exp()).sum::<f64>().ln(),
            ))
        } else {
            inner_min_value(&sol.weights, sol.lambda, rhat, ball, cfg)
        };
        let dual = program.sample_value(j, w, vj, sol.lambda);
        let residual = match (primal, dual) {
            (Ok(ExtReal::Finite(a)), Ok(ExtReal::Finite(b))) => a - b,
            (Ok(a), Ok(b)) => {
                report.failures.push(format!("sample {j}: primal {a}, dual {b}"));
                f64::INFINITY
            }
            (Err(e), _) | (_, Err(e)) => {
                report.failures.push(format!("sample {j}: {e}"));
                f64::INFINITY
            }
        };
        worst = worst.max(residual.abs());
        report.fenchel_residuals.push(residual);
    }
    report.max_fenchel_residual = worst;
    report
}

fn feasibility(sol: &RobustSolution, ball: &BallSpec) -> FeasibilityReport {
    let w = sol.weights.as_slice();
    let mut r = FeasibilityReport {
        weight_sum_residual: (w.iter().sum::<f64>() - 1.0).abs(),
        min_weight: w.iter().copied().fold(f64::INFINITY, f64::min),
        lambda: sol.lambda,
        ..Default::default()
    };
    r.min_v = f64::INFINITY;
    for vj in &sol.v {
        r.v_sum_residual = r.v_sum_residual.max((vj.iter().sum::<f64>() - 1.0).abs());
        r.min_v = vj.iter().copied().fold(r.min_v, f64::min);
        if ball.is_order_one() {
            r.dual_norm_excess = r.dual_norm_excess.max(ball.dual_norm().eval(vj) - sol.lambda);
        }
    }
    if r.weight_sum_residual > FEAS_TOL {
        r.violations.push(format!("weights sum residual {:e}", r.weight_sum_residual));
    }
    if r.min_weight < 0.0 {
        r.violations.push(format!("negative weight {:e}", r.min_weight));
    }
    if r.v_sum_residual > FEAS_TOL {
        r.violations.push(format!("v row sum residual {:e}", r.v_sum_residual));
    }
    if r.min_v < 0.0 {
        r.violations.push(format!("negative v entry {:e}", r.min_v));
    }
    if !(sol.lambda >= 0.0) {
        r.violations.push(format!("negative multiplier {}", sol.lambda));
    }
    if r.dual_norm_excess > FEAS_TOL * sol.lambda.max(1.0) {
        r.violations.push(format!("dual norm exceeds multiplier by {:e}", r.dual_norm_excess));
    }
    r
}

#[cfg(test)]
mod tests;
