//! Empirical (sample average) Kelly portfolio.
//!
//! Maximizes `(1/N) Σ_j ln(Σ_i e^{r̂_{j,i}} w_i)` over the simplex with a
//! log-barrier Newton path, then certifies first-order optimality: no simplex
//! vertex may improve on `w` by more than `tol_rel·(1 + |objective|)` along
//! the directional derivative.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::{ReturnKind, ReturnsMatrix, SimplexWeights, SolverSettings, SolverStatus};
use crate::error::{BestIterate, Error, Result};
use crate::simplex_newton;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KellySolution {
    pub weights: SimplexWeights,
    /// Mean log absolute return per period.
    pub objective: f64,
    pub status: SolverStatus,
    /// Largest directional derivative towards a vertex at the returned point.
    pub first_order_gap: f64,
    pub iterations: usize,
}

fn check_dims(w: &[f64], samples: &ReturnsMatrix) -> Result<()> {
    samples.require_kind(ReturnKind::Log)?;
    if w.len() != samples.n_assets() {
        return Err(Error::DimensionMismatch {
            what: "weights vs assets",
            expected: samples.n_assets(),
            found: w.len(),
        });
    }
    Ok(())
}

/// Mean log absolute portfolio return, `exp(r̂_j)ᵀw` being the payoff.
pub fn kelly_objective(w: &SimplexWeights, samples: &ReturnsMatrix) -> Result<f64> {
    check_dims(w.as_slice(), samples)?;
    Ok(objective_raw(w.as_slice(), samples))
}

pub(crate) fn objective_raw(w: &[f64], samples: &ReturnsMatrix) -> f64 {
    let total: f64 = samples.samples().map(|r| payoff(w, r).ln()).sum();
    total / samples.n_samples() as f64
}

fn payoff(w: &[f64], r: &[f64]) -> f64 {
    w.iter().zip(r).map(|(w, r)| w * r.exp()).sum()
}

/// `∂/∂w_i = (1/N) Σ_j e^{r̂_{j,i}} / (exp(r̂_j)ᵀw)`.
pub fn kelly_gradient(w: &SimplexWeights, samples: &ReturnsMatrix) -> Result<Vec<f64>> {
    check_dims(w.as_slice(), samples)?;
    Ok(gradient_raw(w.as_slice(), samples).iter().copied().collect())
}

fn gradient_raw(w: &[f64], samples: &ReturnsMatrix) -> DVector<f64> {
    let n = w.len();
    let mut g = DVector::zeros(n);
    for r in samples.samples() {
        let pay = payoff(w, r);
        for i in 0..n {
            g[i] += r[i].exp() / pay;
        }
    }
    g / samples.n_samples() as f64
}

fn evaluate(w: &[f64], samples: &ReturnsMatrix) -> simplex_newton::Evaluation {
    let n = w.len();
    let mut val = 0.0;
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    let mut a = DVector::zeros(n);
    for r in samples.samples() {
        for i in 0..n {
            a[i] = r[i].exp();
        }
        let pay = a.dot(&DVector::from_column_slice(w));
        if !(pay > 0.0) {
            return None;
        }
        val += pay.ln();
        g.axpy(1.0 / pay, &a, 1.0);
        h.ger(-1.0 / (pay * pay), &a, &a, 1.0);
    }
    let inv = 1.0 / samples.n_samples() as f64;
    Some((val * inv, g * inv, h * inv))
}

/// `max_i ∂_i f − wᵀ∇f`: the best improvement rate towards any vertex.
fn first_order_gap(w: &[f64], samples: &ReturnsMatrix) -> f64 {
    let g = gradient_raw(w, samples);
    let gw: f64 = g.iter().zip(w).map(|(g, w)| g * w).sum();
    g.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - gw
}

/// Solves the empirical Kelly program.
pub fn solve_kelly(samples: &ReturnsMatrix, settings: &SolverSettings) -> Result<KellySolution> {
    settings.validate()?;
    samples.require_kind(ReturnKind::Log)?;
    let n = samples.n_assets();
    if n == 1 {
        let weights = SimplexWeights::vertex(1, 0);
        let objective = objective_raw(weights.as_slice(), samples);
        return Ok(KellySolution {
            weights,
            objective,
            status: SolverStatus::Optimal,
            first_order_gap: 0.0,
            iterations: 0,
        });
    }

    let mut x = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut mu = 1e-2;
    // On a centred point the first-order gap is at most n·μ.
    let mu_final = 0.01 * settings.tol_rel / n as f64;
    loop {
        let budget = settings.max_iter.saturating_sub(iterations);
        if budget == 0 {
            break;
        }
        let out = simplex_newton::maximize(x, mu, 1e-15, budget, |w| evaluate(w, samples));
        iterations += out.iterations;
        x = out.x;
        if !out.converged {
            break;
        }
        if mu <= mu_final {
            break;
        }
        mu = (mu * 0.1).max(mu_final);
    }

    let total: f64 = x.iter().sum();
    let w: Vec<f64> = x.iter().map(|v| v / total).collect();
    let objective = objective_raw(&w, samples);
    let gap = first_order_gap(&w, samples);
    let optimal = gap <= settings.tol_rel * (1.0 + objective.abs());
    let solution = KellySolution {
        weights: crate::domain::make_weights(&w)?,
        objective,
        status: if optimal { SolverStatus::Optimal } else { SolverStatus::MaxIter },
        first_order_gap: gap,
        iterations,
    };
    if optimal {
        Ok(solution)
    } else {
        Err(Error::SolverFailure {
            status: SolverStatus::MaxIter,
            best: BestIterate::Kelly(Box::new(solution)),
        })
    }
}
