//! Brute-force evaluation of the worst-case expected log-growth at a fixed
//! portfolio, used to certify the robust solver.
//!
//! Two routes are provided for the per-sample inner problem:
//!
//! * the primal route minimizes `ln(Σ_i e^{r_i} w_i) + λ‖r − r̂‖^p` over
//!   `r ∈ ℝⁿ` with Newton's method ([`inner_min_value`]);
//! * the conjugate route maximizes
//!   `Σ_i v_i ln(w_i/v_i) + r̂ᵀv − λ·c·‖v/λ‖_*^q` over `v` on the simplex
//!   ([`conjugate_inner_value`]).
//!
//! Equality of the two is the Fenchel duality step of the reformulation.
//! [`robust_objective`] then maximizes the primal route over `λ ≥ 0`.
//!
//! Nonsmooth norms (and `p < 2`) are handled by smoothing with a shrinking
//! parameter; the Euclidean `p = 2` case is exact.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{make_weights, BallSpec, GroundNorm, ReturnKind, ReturnsMatrix, SimplexWeights};
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::simplex_newton;
use crate::solver_kelly::kelly_objective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerEvalConfig {
    /// Length of the fallback gradient step when the Newton system fails.
    pub r_grid_halfwidth: f64,
    pub coord_tol: f64,
    pub lambda_bracket: (f64, f64),
}

impl Default for InnerEvalConfig {
    fn default() -> Self {
        Self {
            r_grid_halfwidth: 2.0,
            coord_tol: 1e-9,
            lambda_bracket: (1e-6, 1e6),
        }
    }
}

impl InnerEvalConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lambda_bracket;
        if !(self.r_grid_halfwidth > 0.0) || !(self.coord_tol > 0.0) || !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!("bad oracle configuration {self:?}")));
        }
        Ok(())
    }
}

/// Worst-case value at fixed weights together with the maximizing multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustEvaluation {
    pub value: f64,
    /// `+∞` for a zero radius.
    pub lambda: f64,
}

const SMOOTHING_START: f64 = 1e-3;
const SMOOTHING_END: f64 = 1e-11;

fn support(w: &SimplexWeights) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] > 0.0).collect()
}

/// `‖1_S‖` for a support of size `k`.
fn ones_norm(norm: GroundNorm, k: usize) -> f64 {
    match norm {
        GroundNorm::L2 => (k as f64).sqrt(),
        GroundNorm::L1 => k as f64,
        GroundNorm::Linf => 1.0,
    }
}

fn check_inputs(w: &SimplexWeights, rhat: &[f64]) -> Result<()> {
    if w.len() != rhat.len() {
        return Err(Error::DimensionMismatch {
            what: "weights vs sample",
            expected: w.len(),
            found: rhat.len(),
        });
    }
    if rhat.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidReturns("non-finite sample".into()));
    }
    Ok(())
}

/// Smoothed `ρ(u) = ‖u‖^p − ‖0‖^p` with gradient and Hessian.
struct PenaltyModel {
    norm: GroundNorm,
    p: f64,
    eta: f64,
}

impl PenaltyModel {
    fn exact(&self) -> bool {
        self.norm == GroundNorm::L2 && self.p == 2.0
    }

    fn norm_parts(&self, u: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = u.len();
        let eta = self.eta;
        match self.norm {
            GroundNorm::L2 => {
                let s = (u.iter().map(|x| x * x).sum::<f64>() + eta * eta).sqrt();
                let g = DVector::from_iterator(k, u.iter().map(|x| x / s));
                let mut h = DMatrix::identity(k, k) / s;
                h.ger(-1.0 / s, &g, &g, 1.0);
                (s, g, h)
            }
            GroundNorm::L1 => {
                let mut val = 0.0;
                let mut g = DVector::zeros(k);
                let mut h = DMatrix::zeros(k, k);
                for (i, &x) in u.iter().enumerate() {
                    let s = (x * x + eta * eta).sqrt();
                    val += s;
                    g[i] = x / s;
                    h[(i, i)] = eta * eta / (s * s * s);
                }
                (val, g, h)
            }
            GroundNorm::Linf => {
                // η ln Σ_i (e^{u_i/η} + e^{−u_i/η})
                let m = u.iter().fold(0.0f64, |m, x| m.max(x.abs())) / eta;
                let mut plus = vec![0.0; k];
                let mut minus = vec![0.0; k];
                let mut z = 0.0;
                for (i, &x) in u.iter().enumerate() {
                    plus[i] = (x / eta - m).exp();
                    minus[i] = (-x / eta - m).exp();
                    z += plus[i] + minus[i];
                }
                let val = eta * (m + z.ln());
                let g = DVector::from_iterator(k, (0..k).map(|i| (plus[i] - minus[i]) / z));
                let mut h = DMatrix::from_diagonal(&DVector::from_iterator(
                    k,
                    (0..k).map(|i| (plus[i] + minus[i]) / (z * eta)),
                ));
                h.ger(-1.0 / eta, &g, &g, 1.0);
                (val, g, h)
            }
        }
    }

    fn eval(&self, u: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = u.len();
        if self.exact() {
            let val = u.iter().map(|x| x * x).sum();
            let g = DVector::from_iterator(k, u.iter().map(|x| 2.0 * x));
            return (val, g, DMatrix::identity(k, k) * 2.0);
        }
        let (nv, ng, nh) = self.norm_parts(u);
        let (n0, _, _) = self.norm_parts(&vec![0.0; k]);
        let p = self.p;
        let val = nv.powf(p) - n0.powf(p);
        let g = &ng * (p * nv.powf(p - 1.0));
        let mut h = nh * (p * nv.powf(p - 1.0));
        if p != 1.0 {
            h.ger(p * (p - 1.0) * nv.powf(p - 2.0), &ng, &ng, 1.0);
        }
        (val, g, h)
    }
}

/// `inf_r { ln(Σ_i e^{r_i} w_i) + λ‖r − r̂‖^p }`.
///
/// Coordinates outside the support of `w` stay at `r̂`, which is optimal for
/// any monotone norm. Returns [`ExtReal::NegInf`] when the infimum is
/// unbounded: always at `λ = 0`, and for `p = 1` when `λ‖1_S‖ < 1`.
pub fn inner_min_value(
    w: &SimplexWeights,
    lambda: f64,
    rhat: &[f64],
    ball: &BallSpec,
    cfg: &InnerEvalConfig,
) -> Result<ExtReal> {
    check_inputs(w, rhat)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("multiplier must be non-negative, got {lambda}")));
    }
    let idx = support(w);
    let k = idx.len();
    if lambda == 0.0 {
        return Ok(ExtReal::NegInf);
    }
    if ball.is_order_one() && lambda * ones_norm(ball.norm(), k) < 1.0 {
        return Ok(ExtReal::NegInf);
    }
    let logw: Vec<f64> = idx.iter().map(|&i| w[i].ln() + rhat[i]).collect();

    let mut model = PenaltyModel {
        norm: ball.norm(),
        p: ball.p(),
        eta: SMOOTHING_START,
    };
    let mut u = vec![0.0; k];
    let mut value;
    loop {
        let (uu, val) = newton_primal(&logw, lambda, &model, u, cfg)?;
        u = uu;
        value = val;
        if model.exact() || model.eta <= SMOOTHING_END {
            break;
        }
        model.eta *= 0.1;
    }
    Ok(ExtReal::Finite(value))
}

fn newton_primal(
    a: &[f64],
    lambda: f64,
    model: &PenaltyModel,
    mut u: Vec<f64>,
    cfg: &InnerEvalConfig,
) -> Result<(Vec<f64>, f64)> {
    let k = u.len();
    let objective = |u: &[f64]| -> (f64, DVector<f64>, DMatrix<f64>) {
        // Stable log-sum-exp over a_i + u_i.
        let m = a.iter().zip(u).fold(f64::NEG_INFINITY, |m, (a, u)| m.max(a + u));
        let e: Vec<f64> = a.iter().zip(u).map(|(a, u)| (a + u - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let pi = DVector::from_iterator(k, e.iter().map(|x| x / z));
        let (pv, pg, ph) = model.eval(u);
        let val = m + z.ln() + lambda * pv;
        let g = &pi + pg * lambda;
        let mut h = DMatrix::from_diagonal(&pi) + ph * lambda;
        h.ger(-1.0, &pi, &pi, 1.0);
        (val, g, h)
    };
    let (mut val, mut g, mut h) = objective(&u);
    // Consecutive accepted steps that left the value unchanged at working
    // precision; along nearly flat directions this is the only usable signal.
    let mut stagnant = 0;
    for _ in 0..1000 {
        if g.amax() <= cfg.coord_tol {
            return Ok((u, val));
        }
        let mut step = None;
        let mut ridge = 0.0;
        for _ in 0..10 {
            let mut hr = h.clone();
            for i in 0..k {
                hr[(i, i)] += ridge;
            }
            if let Some(ch) = hr.cholesky() {
                step = Some(-ch.solve(&g));
                break;
            }
            ridge = if ridge == 0.0 { 1e-12 * h.amax().max(1.0) } else { ridge * 100.0 };
        }
        // Fallback: a gradient step of length r_grid_halfwidth.
        let d = step.clone().unwrap_or_else(|| -&g * (cfg.r_grid_halfwidth / g.amax()));
        let slope = g.dot(&d);
        // Half the squared Newton decrement bounds the remaining decrease.
        if step.is_some() && -slope * 0.5 <= 1e-15 * (1.0 + val.abs()) {
            return Ok((u, val));
        }
        let mut t = 1.0;
        let mut moved = false;
        // Inside the quadratic-convergence region the value no longer resolves
        // the decrease; take the full step unless it visibly goes uphill.
        let pure_newton = -slope < 1e-12 && step.is_some();
        for _ in 0..200 {
            let trial: Vec<f64> = u.iter().zip(d.iter()).map(|(u, d)| u + t * d).collect();
            let (v2, g2, h2) = objective(&trial);
            let flat = pure_newton && v2 <= val + 4.0 * f64::EPSILON * (1.0 + val.abs());
            if flat || v2 <= val + 1e-4 * t * slope {
                let resolution = 4.0 * f64::EPSILON * (1.0 + val.abs());
                stagnant = if (val - v2).abs() <= resolution { stagnant + 1 } else { 0 };
                u = trial;
                val = v2;
                g = g2;
                h = h2;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if stagnant >= 25 {
            return Ok((u, val));
        }
        if !moved {
            // At working precision; accept if the decrement is negligible.
            if -slope <= 1e-12 * (1.0 + val.abs()) {
                return Ok((u, val));
            }
            return Err(Error::NumericFailure(format!(
                "inner line search stalled with gradient {:e}",
                g.amax()
            )));
        }
    }
    Err(Error::NumericFailure(format!(
        "inner minimization did not reach tolerance {:e} (gradient {:e})",
        cfg.coord_tol,
        g.amax()
    )))
}

/// `f*(v) = −Σ_i v_i ln(w_i/v_i)` with `0·ln(·/0) = 0` and `+∞` when
/// `v_i > 0 = w_i`.
///
/// This is the conjugate of `ln(Σ_i e^{r_i} w_i)` on the simplex
/// `Σ v_i = 1`; off the simplex the true conjugate is `+∞` and this returns
/// the entropy expression only.
pub fn conjugate_f(v: &[f64], w: &SimplexWeights) -> ExtReal {
    let mut total = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        if vi <= 0.0 {
            continue;
        }
        if w[i] <= 0.0 {
            return ExtReal::PosInf;
        }
        total -= vi * (w[i] / vi).ln();
    }
    ExtReal::Finite(total)
}

/// `h*(z) = r̂ᵀz + ‖z‖_*^q / (q·p^{q−1})`, the conjugate of `‖r − r̂‖^p`.
pub fn conjugate_h(z: &[f64], rhat: &[f64], ball: &BallSpec) -> Result<f64> {
    let (Some(q), Some(c)) = (ball.conjugate_exponent(), ball.perspective_coefficient()) else {
        return Err(Error::UnsupportedOrder(ball.p()));
    };
    if z.len() != rhat.len() {
        return Err(Error::DimensionMismatch {
            what: "conjugate argument",
            expected: rhat.len(),
            found: z.len(),
        });
    }
    let lin: f64 = z.iter().zip(rhat).map(|(a, b)| a * b).sum();
    Ok(lin + c * ball.dual_norm().eval(z).powf(q))
}

/// Smoothed `s(v) = ‖v‖_*^q` for `v` in the positive orthant.
fn dual_power(norm: GroundNorm, q: f64, eta: f64, v: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let k = v.len();
    let (nv, ng, nh) = match norm {
        GroundNorm::L2 => {
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let g = DVector::from_iterator(k, v.iter().map(|x| x / s));
            let mut h = DMatrix::identity(k, k) / s;
            h.ger(-1.0 / s, &g, &g, 1.0);
            (s, g, h)
        }
        GroundNorm::L1 => (
            v.iter().sum::<f64>(),
            DVector::from_element(k, 1.0),
            DMatrix::zeros(k, k),
        ),
        GroundNorm::Linf => {
            let m = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let e: Vec<f64> = v.iter().map(|x| ((x - m) / eta).exp()).collect();
            let z: f64 = e.iter().sum();
            let g = DVector::from_iterator(k, e.iter().map(|x| x / z));
            let mut h = DMatrix::from_diagonal(&g) / eta;
            h.ger(-1.0 / eta, &g, &g, 1.0);
            (m + eta * z.ln(), g, h)
        }
    };
    let val = nv.powf(q);
    let g = &ng * (q * nv.powf(q - 1.0));
    let mut h = nh * (q * nv.powf(q - 1.0));
    h.ger(q * (q - 1.0) * nv.powf(q - 2.0), &ng, &ng, 1.0);
    (val, g, h)
}

/// `max_{v ∈ Δ} Σ_i v_i ln(w_i/v_i) + r̂ᵀv − λ·c·‖v/λ‖_*^q`, or for `p = 1`
/// the same without the power term under `‖v‖_* ≤ λ`.
///
/// Returns [`ExtReal::NegInf`] when the `p = 1` constraint set is empty.
pub fn conjugate_inner_value(
    w: &SimplexWeights,
    lambda: f64,
    rhat: &[f64],
    ball: &BallSpec,
) -> Result<ExtReal> {
    check_inputs(w, rhat)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("multiplier must be positive, got {lambda}")));
    }
    let idx = support(w);
    let k = idx.len();
    let lw: Vec<f64> = idx.iter().map(|&i| w[i].ln()).collect();
    let r: Vec<f64> = idx.iter().map(|&i| rhat[i]).collect();
    let dual = ball.dual_norm();

    // Σ v(ln w − ln v) + r̂ᵀv and its derivatives.
    let base = move |v: &[f64]| -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        if v.iter().any(|&x| !(x > 0.0)) {
            return None;
        }
        let val: f64 = (0..k).map(|i| v[i] * (lw[i] - v[i].ln() + r[i])).sum();
        let g = DVector::from_iterator(k, (0..k).map(|i| lw[i] - v[i].ln() - 1.0 + r[i]));
        let h = DMatrix::from_diagonal(&DVector::from_iterator(k, v.iter().map(|x| -1.0 / x)));
        Some((val, g, h))
    };
    let uniform = vec![1.0 / k as f64; k];
    let tol = 1e-16;
    let iters = 500;

    if let (Some(q), Some(c)) = (ball.conjugate_exponent(), ball.perspective_coefficient()) {
        let scale = c * lambda.powf(1.0 - q);
        let mut eta = if dual == GroundNorm::Linf { SMOOTHING_START } else { 0.0 };
        let mut x = uniform;
        loop {
            let f = |v: &[f64]| {
                let (val, g, h) = base(v)?;
                let (s, sg, sh) = dual_power(dual, q, eta, v);
                Some((val - scale * s, g - sg * scale, h - sh * scale))
            };
            let out = simplex_newton::maximize(x, 0.0, tol, iters, f);
            x = out.x;
            if !out.converged {
                return Err(Error::NumericFailure("conjugate maximization did not converge".into()));
            }
            if eta == 0.0 || eta <= SMOOTHING_END {
                let value = f(&x).map(|t| t.0).ok_or_else(|| {
                    Error::NumericFailure("conjugate iterate left the domain".into())
                })?;
                return Ok(ExtReal::Finite(value));
            }
            eta *= 0.1;
        }
    }

    // p = 1: ‖v‖_* ≤ λ on the simplex.
    let threshold = match dual {
        GroundNorm::L2 => 1.0 / (k as f64).sqrt(),
        GroundNorm::Linf => 1.0 / k as f64,
        GroundNorm::L1 => 1.0,
    };
    if lambda < threshold * (1.0 - 1e-12) {
        return Ok(ExtReal::NegInf);
    }
    if lambda <= threshold * (1.0 + 1e-12) || dual == GroundNorm::L1 {
        // Either the feasible set is the single point 1/k, or the constraint
        // never binds on the simplex.
        if dual == GroundNorm::L1 {
            let out = simplex_newton::maximize(uniform, 0.0, tol, iters, &base);
            if !out.converged {
                return Err(Error::NumericFailure("conjugate maximization did not converge".into()));
            }
            return Ok(ExtReal::Finite(base(&out.x).map_or(f64::NAN, |t| t.0)));
        }
        return Ok(ExtReal::Finite(base(&uniform).map_or(f64::NAN, |t| t.0)));
    }
    let mut mu = 1e-2;
    let mut x = uniform;
    loop {
        let f = |v: &[f64]| {
            let (val, mut g, mut h) = base(v)?;
            match dual {
                GroundNorm::L2 => {
                    let s = lambda * lambda - v.iter().map(|x| x * x).sum::<f64>();
                    if !(s > 0.0) {
                        return None;
                    }
                    let vv = DVector::from_column_slice(v);
                    g -= &vv * (2.0 * mu / s);
                    for i in 0..k {
                        h[(i, i)] -= 2.0 * mu / s;
                    }
                    h.ger(-4.0 * mu / (s * s), &vv, &vv, 1.0);
                    Some((val + mu * s.ln(), g, h))
                }
                _ => {
                    let mut b = 0.0;
                    for i in 0..k {
                        let s = lambda - v[i];
                        if !(s > 0.0) {
                            return None;
                        }
                        b += s.ln();
                        g[i] -= mu / s;
                        h[(i, i)] -= mu / (s * s);
                    }
                    Some((val + mu * b, g, h))
                }
            }
        };
        let out = simplex_newton::maximize(x, 0.0, tol, iters, f);
        x = out.x;
        if !out.converged {
            return Err(Error::NumericFailure("constrained conjugate maximization did not converge".into()));
        }
        if mu < 1e-13 {
            break;
        }
        mu *= 0.1;
    }
    Ok(ExtReal::Finite(base(&x).map_or(f64::NAN, |t| t.0)))
}

fn mean_inner(
    w: &SimplexWeights,
    lambda: f64,
    samples: &ReturnsMatrix,
    ball: &BallSpec,
    cfg: &InnerEvalConfig,
) -> Result<f64> {
    let values = (0..samples.n_samples())
        .into_par_iter()
        .map(|j| inner_min_value(w, lambda, samples.sample(j), ball, cfg))
        .collect::<Result<Vec<_>>>()?;
    // Sequential reduction keeps the result independent of scheduling.
    let mut total = 0.0;
    for v in values {
        match v {
            ExtReal::Finite(x) => total += x,
            _ => return Ok(f64::NEG_INFINITY),
        }
    }
    Ok(total / samples.n_samples() as f64)
}

/// Worst-case expected log-growth of `w` over the ball.
pub fn robust_objective(
    w: &SimplexWeights,
    samples: &ReturnsMatrix,
    ball: &BallSpec,
    cfg: &InnerEvalConfig,
) -> Result<f64> {
    robust_evaluation(w, samples, ball, cfg).map(|e| e.value)
}

/// [`robust_objective`] plus the maximizing multiplier.
///
/// The dual function in `λ` is concave, so a golden-section search on `ln λ`
/// over `cfg.lambda_bracket` finds its maximum. A maximizer on the bracket
/// edge widens that side (doubling its log-distance from the centre) up to
/// three times before giving up with [`Error::BracketTooNarrow`].
pub fn robust_evaluation(
    w: &SimplexWeights,
    samples: &ReturnsMatrix,
    ball: &BallSpec,
    cfg: &InnerEvalConfig,
) -> Result<RobustEvaluation> {
    cfg.validate()?;
    samples.require_kind(ReturnKind::Log)?;
    if w.len() != samples.n_assets() {
        return Err(Error::DimensionMismatch {
            what: "weights vs assets",
            expected: samples.n_assets(),
            found: w.len(),
        });
    }
    let eps = ball.epsilon();
    if eps == 0.0 {
        return Ok(RobustEvaluation {
            value: kelly_objective(w, samples)?,
            lambda: f64::INFINITY,
        });
    }
    let radius_term = eps.powf(ball.p());
    let dual_fn = |s: f64| -> Result<f64> {
        let lambda = s.exp();
        Ok(mean_inner(w, lambda, samples, ball, cfg)? - lambda * radius_term)
    };

    let (mut lo, mut hi) = (cfg.lambda_bracket.0.ln(), cfg.lambda_bracket.1.ln());
    for _expansion in 0..=3 {
        let (s_best, v_best) = golden_section(&dual_fn, lo, hi)?;
        let edge = 1e-6 * (hi - lo);
        let centre = 0.5 * (lo + hi);
        if s_best - lo <= edge && v_best > f64::NEG_INFINITY {
            lo = centre - 2.0 * (centre - lo);
        } else if hi - s_best <= edge {
            hi = centre + 2.0 * (hi - centre);
        } else {
            return Ok(RobustEvaluation {
                value: v_best,
                lambda: s_best.exp(),
            });
        }
    }
    let (s_best, _) = golden_section(&dual_fn, lo, hi)?;
    Err(Error::BracketTooNarrow {
        lambda: s_best.exp(),
    })
}

fn golden_section<F>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > 1e-10 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let s = 0.5 * (a + b);
    let fs = f(s)?;
    // Report the best point seen among the final candidates.
    let mut best = (s, fs);
    for cand in [(c, fc), (d, fd)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    Ok(best)
}

/// Outcome of [`fenchel_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FenchelSuiteReport {
    pub instances: usize,
    /// Number of per-sample comparisons.
    pub comparisons: usize,
    pub max_gap: f64,
    pub worst_instance: usize,
}

/// Random instance `index` of the duality suite: weights, samples and `λ`.
///
/// Sizes are `n ∈ {1, 2, 3}` and `N ∈ {1, ..., 5}`, returns are uniform on
/// `[−0.1, 0.1]`, weights are uniform on the simplex with an occasional zero
/// entry and `λ` is log-uniform on `[0.1, 10]`.
pub fn fenchel_instance(seed: u64, index: u64) -> (SimplexWeights, ReturnsMatrix, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = rng.gen_range(1..=3usize);
    let n_samples = rng.gen_range(1..=5usize);
    let values: Vec<f64> = (0..n * n_samples).map(|_| rng.gen_range(-0.1..=0.1)).collect();
    let mut raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    if n > 1 && rng.gen_bool(0.2) {
        raw[rng.gen_range(0..n)] = 0.0;
    }
    let total: f64 = raw.iter().sum();
    let w = make_weights(&raw.iter().map(|x| x / total).collect::<Vec<_>>()).expect("normalized weights");
    let lambda = rng.gen_range(0.1f64.ln()..=10.0f64.ln()).exp();
    let labels = (1..=n).map(|i| format!("A{i}")).collect();
    let samples = ReturnsMatrix::new(values, n_samples, n, ReturnKind::Log, labels)
        .expect("generated returns are finite");
    (w, samples, lambda)
}

/// Compares the primal and conjugate routes on `instances` random
/// instances. Both routes returning `−∞` counts as agreement.
pub fn fenchel_suite(
    seed: u64,
    instances: usize,
    ball: &BallSpec,
    cfg: &InnerEvalConfig,
) -> Result<FenchelSuiteReport> {
    let mut report = FenchelSuiteReport {
        instances,
        comparisons: 0,
        max_gap: 0.0,
        worst_instance: 0,
    };
    for k in 0..instances {
        let (w, samples, lambda) = fenchel_instance(seed, k as u64);
        for rhat in samples.samples() {
            let primal = inner_min_value(&w, lambda, rhat, ball, cfg)?;
            let dual = conjugate_inner_value(&w, lambda, rhat, ball)?;
            let gap = match (primal, dual) {
                (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs(),
                (a, b) if a == b => 0.0,
                _ => f64::INFINITY,
            };
            report.comparisons += 1;
            if gap > report.max_gap || gap.is_nan() {
                report.max_gap = gap;
                report.worst_instance = k;
            }
        }
    }
    Ok(report)
}
