//! Dense equality-constrained Newton method on the probability simplex.
//!
//! Maximizes `φ(x) + μ Σ ln x_i` subject to `Σ x_i = 1`, `x > 0`, for a
//! concave `φ` supplied as value/gradient/Hessian. Used by the SAA solver and
//! by the conjugate-side oracle; the robust solver has its own machinery.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of the concave objective, or `None` outside
/// its domain.
pub(crate) type Evaluation = Option<(f64, DVector<f64>, DMatrix<f64>)>;

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs damped Newton from a strictly interior `x0` until half the squared
/// Newton decrement falls below `tol`.
pub(crate) fn maximize<F>(x0: Vec<f64>, mu: f64, tol: f64, max_iter: usize, f: F) -> NewtonOutcome
where
    F: Fn(&[f64]) -> Evaluation,
{
    let n = x0.len();
    let mut x = x0;
    if n == 1 {
        return NewtonOutcome {
            x: vec![1.0],
            iterations: 0,
            converged: true,
        };
    }
    let barrier = |x: &[f64]| -> f64 {
        if mu > 0.0 {
            mu * x.iter().map(|v| v.ln()).sum::<f64>()
        } else {
            0.0
        }
    };
    let Some((mut val, mut grad, mut hess)) = f(&x) else {
        return NewtonOutcome {
            x,
            iterations: 0,
            converged: false,
        };
    };
    for it in 0..max_iter {
        // Minimize ψ = −φ − μ Σ ln x.
        let mut h = -&hess;
        let mut g = -&grad;
        for i in 0..n {
            h[(i, i)] += mu / (x[i] * x[i]);
            g[i] -= mu / x[i];
        }
        // Sum drift from roundoff is folded back through the constraint row.
        let residual = 1.0 - x.iter().sum::<f64>();
        let Some(dir) = constrained_step(&h, &g, residual) else {
            return NewtonOutcome {
                x,
                iterations: it,
                converged: false,
            };
        };
        let decrement = -g.dot(&dir);
        if decrement * 0.5 <= tol && residual.abs() < 1e-14 {
            return NewtonOutcome {
                x,
                iterations: it,
                converged: true,
            };
        }
        // Largest step keeping x > 0, then backtrack on ψ.
        let mut t: f64 = 1.0;
        for i in 0..n {
            if dir[i] < 0.0 {
                t = t.min(-0.99 * x[i] / dir[i]);
            }
        }
        let psi0 = -(val + barrier(&x));
        let slope = g.dot(&dir);
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            if trial.iter().all(|&v| v > 0.0) {
                if let Some((v2, g2, h2)) = f(&trial) {
                    let psi = -(v2 + barrier(&trial));
                    if psi.is_finite() && psi <= psi0 + 1e-4 * t * slope.min(0.0) + 1e-15 * psi0.abs() {
                        x = trial;
                        val = v2;
                        grad = g2;
                        hess = h2;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // No progress is possible at working precision.
            return NewtonOutcome {
                x,
                iterations: it,
                converged: decrement * 0.5 <= tol.max(1e-9),
            };
        }
    }
    NewtonOutcome {
        x,
        iterations: max_iter,
        converged: false,
    }
}

/// Solves `min ½dᵀHd + gᵀd` s.t. `1ᵀd = r`, returning `d`.
fn constrained_step(h: &DMatrix<f64>, g: &DVector<f64>, r: f64) -> Option<DVector<f64>> {
    let n = g.len();
    let ones = DVector::from_element(n, 1.0);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut hr = h.clone();
        if ridge > 0.0 {
            for i in 0..n {
                hr[(i, i)] += ridge;
            }
        }
        if let Some(chol) = hr.cholesky() {
            let hg = chol.solve(g);
            let h1 = chol.solve(&ones);
            let denom = ones.dot(&h1);
            if denom <= 0.0 || !denom.is_finite() {
                return None;
            }
            // d = −H⁻¹(g + ν1), with ν chosen so that 1ᵀd = r.
            let nu = -(r + ones.dot(&hg)) / denom;
            let d = -(hg + h1 * nu);
            return d.iter().all(|v| v.is_finite()).then_some(d);
        }
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1e-12, f64::max);
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 100.0 };
    }
    None
}
