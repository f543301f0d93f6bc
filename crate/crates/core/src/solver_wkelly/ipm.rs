//! Primal barrier method for the robust program.
//!
//! Minimization form, scaled by N:
//!
//! ```text
//! Σ_j [ −r̂_jᵀv_j + Σ_i v_ji ln(v_ji / w_i) + P_j ] + N λ εᵖ
//! s.t. Σ_i w_i = 1, Σ_i v_ji = 1, w, v ≥ 0, λ ≥ 0
//! ```
//!
//! where `P_j = c λ^{1−q} ‖v_j‖_*^q` for p > 1 and, for p = 1, `P_j = 0`
//! under `‖v_j‖_* ≤ λ`. The `L∞` dual norm uses an epigraph variable `t_j`.
//!
//! Each Newton system has block-arrow structure: sample blocks `z_j = (v_j,
//! [t_j])` couple only through `u = (w, λ)`. Blocks are eliminated one at a
//! time and the Schur complement on `u` is solved densely, so a step costs
//! `O(N n³)`.

use nalgebra::{DMatrix, DVector};

use crate::domain::{BallSpec, GroundNorm, ReturnsMatrix, SolverSettings};

#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub w: Vec<f64>,
    pub lambda: f64,
    pub v: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierOutcome {
    pub iterate: Iterate,
    pub iterations: usize,
    pub converged: bool,
    /// Barrier parameter of the last centring, in objective units per period.
    pub gap_bound: f64,
}

struct Problem<'a> {
    samples: &'a ReturnsMatrix,
    n: usize,
    n_samples: usize,
    /// (q, c) for p > 1.
    power: Option<(f64, f64)>,
    eps_p: f64,
    dual: GroundNorm,
    epigraph: bool,
    floor_w: f64,
}

struct Block {
    g: DVector<f64>,
    h: DMatrix<f64>,
    /// Coupling Hessian ∂²/∂z∂u.
    hu: DMatrix<f64>,
}

struct Assembled {
    blocks: Vec<Block>,
    gu: DVector<f64>,
    huu: DMatrix<f64>,
}

struct Step {
    dz: Vec<DVector<f64>>,
    du: DVector<f64>,
    /// ∇Ψ·Δ
    slope: f64,
}

impl<'a> Problem<'a> {
    fn local_dim(&self) -> usize {
        self.n + usize::from(self.epigraph)
    }

    /// Barrier parameter multiplicity (gap of a centred point is this × μ).
    fn barrier_count(&self) -> f64 {
        let per_block = self.n as f64
            + match (self.power, self.dual) {
                (Some(_), GroundNorm::Linf) => self.n as f64,
                (Some(_), _) => 0.0,
                (None, GroundNorm::L2) => 2.0,
                (None, GroundNorm::L1) => 1.0,
                (None, GroundNorm::Linf) => self.n as f64,
            };
        self.n as f64 + f64::from(u8::from(self.power.is_some())) + self.n_samples as f64 * per_block
    }

    fn ln_w(&self, w: f64) -> f64 {
        w.max(self.floor_w).ln()
    }

    /// Ψ_μ, or `None` outside the barrier domain.
    fn value(&self, it: &Iterate, mu: f64) -> Option<f64> {
        let n = self.n;
        if it.w.iter().any(|&x| !(x > 0.0)) {
            return None;
        }
        if self.power.is_some() && !(it.lambda > 0.0) {
            return None;
        }
        let lnw: Vec<f64> = it.w.iter().map(|&x| self.ln_w(x)).collect();
        let mut total = 0.0;
        for (j, v) in it.v.iter().enumerate() {
            let r = self.samples.sample(j);
            for i in 0..n {
                if !(v[i] > 0.0) {
                    return None;
                }
                let lv = v[i].ln();
                total += -r[i] * v[i] + v[i] * (lv - lnw[i]) - mu * lv;
            }
            total += self.penalty_value(v, it.t.get(j).copied(), it.lambda, mu)?;
        }
        total += self.n_samples as f64 * it.lambda * self.eps_p;
        total -= mu * lnw.iter().sum::<f64>();
        if self.power.is_some() {
            total -= mu * it.lambda.ln();
        }
        total.is_finite().then_some(total)
    }

    fn penalty_value(&self, v: &[f64], t: Option<f64>, lambda: f64, mu: f64) -> Option<f64> {
        match self.power {
            Some((q, c)) => {
                let a = c * lambda.powf(1.0 - q);
                match self.dual {
                    GroundNorm::L2 => Some(a * v.iter().map(|x| x * x).sum::<f64>().powf(q / 2.0)),
                    GroundNorm::L1 => Some(a * v.iter().sum::<f64>().powf(q)),
                    GroundNorm::Linf => {
                        let t = t?;
                        let mut b = 0.0;
                        for &x in v {
                            let d = t - x;
                            if !(d > 0.0) {
                                return None;
                            }
                            b += d.ln();
                        }
                        Some(a * t.powf(q) - mu * b)
                    }
                }
            }
            None => match self.dual {
                GroundNorm::L2 => {
                    let d = lambda * lambda - v.iter().map(|x| x * x).sum::<f64>();
                    (d > 0.0 && lambda > 0.0).then(|| -mu * d.ln())
                }
                GroundNorm::L1 => {
                    let d = lambda - v.iter().sum::<f64>();
                    (d > 0.0).then(|| -mu * d.ln())
                }
                GroundNorm::Linf => {
                    let mut b = 0.0;
                    for &x in v {
                        let d = lambda - x;
                        if !(d > 0.0) {
                            return None;
                        }
                        b += d.ln();
                    }
                    Some(-mu * b)
                }
            },
        }
    }

    fn assemble(&self, it: &Iterate, mu: f64) -> Assembled {
        let n = self.n;
        let m = self.local_dim();
        let li = n; // λ position inside u
        let nu = n + 1;
        let mut gu = DVector::zeros(nu);
        let mut huu = DMatrix::zeros(nu, nu);
        let mut blocks = Vec::with_capacity(self.n_samples);
        let lambda = it.lambda;

        for (j, v) in it.v.iter().enumerate() {
            let r = self.samples.sample(j);
            let mut g = DVector::zeros(m);
            let mut h = DMatrix::zeros(m, m);
            let mut hu = DMatrix::zeros(m, nu);
            for i in 0..n {
                let (vi, wi) = (v[i], it.w[i].max(self.floor_w));
                g[i] += -r[i] + vi.ln() + 1.0 - wi.ln() - mu / vi;
                h[(i, i)] += 1.0 / vi + mu / (vi * vi);
                hu[(i, i)] += -1.0 / wi;
                gu[i] += -vi / wi;
                huu[(i, i)] += vi / (wi * wi);
            }
            match self.power {
                Some((q, c)) => {
                    let a = c * lambda.powf(1.0 - q);
                    let da = c * (1.0 - q) * lambda.powf(-q);
                    let dda = c * q * (q - 1.0) * lambda.powf(-q - 1.0);
                    // s(z), ∇s, ∇²s over the local variables.
                    let mut gs = DVector::zeros(m);
                    let mut hs = DMatrix::zeros(m, m);
                    let s = match self.dual {
                        GroundNorm::L2 => {
                            let vv: f64 = v.iter().map(|x| x * x).sum();
                            let base = q * vv.powf(q / 2.0 - 1.0);
                            let curv = q * (q - 2.0) * vv.powf(q / 2.0 - 2.0);
                            for i in 0..n {
                                gs[i] = base * v[i];
                                hs[(i, i)] += base;
                                for k in 0..n {
                                    hs[(i, k)] += curv * v[i] * v[k];
                                }
                            }
                            vv.powf(q / 2.0)
                        }
                        GroundNorm::L1 => {
                            let sum: f64 = v.iter().sum();
                            let d1 = q * sum.powf(q - 1.0);
                            let d2 = q * (q - 1.0) * sum.powf(q - 2.0);
                            for i in 0..n {
                                gs[i] = d1;
                                for k in 0..n {
                                    hs[(i, k)] = d2;
                                }
                            }
                            sum.powf(q)
                        }
                        GroundNorm::Linf => {
                            let t = it.t[j];
                            gs[n] = q * t.powf(q - 1.0);
                            hs[(n, n)] = q * (q - 1.0) * t.powf(q - 2.0);
                            for i in 0..n {
                                let d = t - v[i];
                                let e = mu / d;
                                let e2 = mu / (d * d);
                                g[n] -= e;
                                g[i] += e;
                                h[(n, n)] += e2;
                                h[(i, i)] += e2;
                                h[(n, i)] -= e2;
                                h[(i, n)] -= e2;
                            }
                            t.powf(q)
                        }
                    };
                    g.axpy(a, &gs, 1.0);
                    h += &hs * a;
                    for i in 0..m {
                        hu[(i, li)] += da * gs[i];
                    }
                    gu[li] += da * s;
                    huu[(li, li)] += dda * s;
                }
                None => match self.dual {
                    GroundNorm::L2 => {
                        let vv: f64 = v.iter().map(|x| x * x).sum();
                        let d = lambda * lambda - vv;
                        for i in 0..n {
                            g[i] += 2.0 * mu * v[i] / d;
                            h[(i, i)] += 2.0 * mu / d;
                            for k in 0..n {
                                h[(i, k)] += 4.0 * mu * v[i] * v[k] / (d * d);
                            }
                            hu[(i, li)] += -4.0 * mu * lambda * v[i] / (d * d);
                        }
                        gu[li] += -2.0 * mu * lambda / d;
                        huu[(li, li)] += -2.0 * mu / d + 4.0 * mu * lambda * lambda / (d * d);
                    }
                    GroundNorm::L1 => {
                        let d = lambda - v.iter().sum::<f64>();
                        let e2 = mu / (d * d);
                        for i in 0..n {
                            g[i] += mu / d;
                            for k in 0..n {
                                h[(i, k)] += e2;
                            }
                            hu[(i, li)] -= e2;
                        }
                        gu[li] -= mu / d;
                        huu[(li, li)] += e2;
                    }
                    GroundNorm::Linf => {
                        for i in 0..n {
                            let d = lambda - v[i];
                            let e2 = mu / (d * d);
                            g[i] += mu / d;
                            h[(i, i)] += e2;
                            hu[(i, li)] -= e2;
                            gu[li] -= mu / d;
                            huu[(li, li)] += e2;
                        }
                    }
                },
            }
            blocks.push(Block { g, h, hu });
        }

        gu[li] += self.n_samples as f64 * self.eps_p;
        for i in 0..n {
            let wi = it.w[i].max(self.floor_w);
            gu[i] -= mu / wi;
            huu[(i, i)] += mu / (wi * wi);
        }
        if self.power.is_some() {
            gu[li] -= mu / lambda;
            huu[(li, li)] += mu / (lambda * lambda);
        }
        Assembled { blocks, gu, huu }
    }

    fn newton_step(&self, it: &Iterate, asm: &Assembled) -> Option<Step> {
        let n = self.n;
        let m = self.local_dim();
        let nu = n + 1;
        let mut schur = asm.huu.clone();
        let mut rhs = -&asm.gu;
        let mut parts = Vec::with_capacity(asm.blocks.len());
        for (j, b) in asm.blocks.iter().enumerate() {
            let mut k = DMatrix::zeros(m + 1, m + 1);
            k.view_mut((0, 0), (m, m)).copy_from(&b.h);
            for i in 0..n {
                k[(i, m)] = 1.0;
                k[(m, i)] = 1.0;
            }
            let mut rhs_b = DMatrix::zeros(m + 1, nu + 1);
            rhs_b.view_mut((0, 0), (m, nu)).copy_from(&b.hu);
            for i in 0..m {
                rhs_b[(i, nu)] = -b.g[i];
            }
            rhs_b[(m, nu)] = 1.0 - it.v[j].iter().sum::<f64>();
            let sol = k.lu().solve(&rhs_b)?;
            let big_x = sol.view((0, 0), (m, nu)).into_owned();
            let x = sol.view((0, nu), (m, 1)).column(0).into_owned();
            let hut = b.hu.transpose();
            schur -= &hut * &big_x;
            rhs -= &hut * &x;
            parts.push((big_x, x));
        }
        let mut kk = DMatrix::zeros(nu + 1, nu + 1);
        kk.view_mut((0, 0), (nu, nu)).copy_from(&schur);
        for i in 0..n {
            kk[(i, nu)] = 1.0;
            kk[(nu, i)] = 1.0;
        }
        let mut r = DVector::zeros(nu + 1);
        r.rows_mut(0, nu).copy_from(&rhs);
        r[nu] = 1.0 - it.w.iter().sum::<f64>();
        let sol = kk.lu().solve(&r)?;
        let du = sol.rows(0, nu).into_owned();
        let mut slope = asm.gu.dot(&du);
        let mut dz = Vec::with_capacity(parts.len());
        for ((big_x, x), b) in parts.into_iter().zip(&asm.blocks) {
            let d = x - big_x * &du;
            slope += b.g.dot(&d);
            dz.push(d);
        }
        let finite = du.iter().all(|x| x.is_finite()) && dz.iter().all(|d| d.iter().all(|x| x.is_finite()));
        finite.then_some(Step { dz, du, slope })
    }

    fn apply(&self, it: &Iterate, step: &Step, t: f64) -> Iterate {
        let n = self.n;
        let w = (0..n).map(|i| it.w[i] + t * step.du[i]).collect();
        let lambda = it.lambda + t * step.du[n];
        let v = it
            .v
            .iter()
            .zip(&step.dz)
            .map(|(v, d)| (0..n).map(|i| v[i] + t * d[i]).collect())
            .collect();
        let tt = if self.epigraph {
            it.t.iter().zip(&step.dz).map(|(t0, d)| t0 + t * d[n]).collect()
        } else {
            Vec::new()
        };
        Iterate { w, lambda, v, t: tt }
    }

    /// Largest step in (0, 1] keeping the linear sign constraints strict.
    fn max_step(&self, it: &Iterate, step: &Step) -> f64 {
        let n = self.n;
        let mut t: f64 = 1.0;
        let mut limit = |x: f64, dx: f64| {
            if dx < 0.0 {
                t = t.min(-0.99 * x / dx);
            }
        };
        for i in 0..n {
            limit(it.w[i], step.du[i]);
        }
        if self.power.is_some() {
            limit(it.lambda, step.du[n]);
        }
        for (j, (v, d)) in it.v.iter().zip(&step.dz).enumerate() {
            for i in 0..n {
                limit(v[i], d[i]);
                if self.epigraph {
                    limit(it.t[j] - v[i], d[n] - d[i]);
                } else if self.power.is_none() && self.dual == GroundNorm::Linf {
                    limit(it.lambda - v[i], step.du[n] - d[i]);
                }
            }
            if self.power.is_none() && self.dual == GroundNorm::L1 {
                let dsum: f64 = (0..n).map(|i| d[i]).sum();
                limit(it.lambda - v.iter().sum::<f64>(), step.du[n] - dsum);
            }
        }
        t
    }
}

fn gibbs(w: &[f64], r: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = w.iter().zip(r).map(|(w, r)| w.ln() + r).collect();
    let m = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub(crate) fn solve(
    samples: &ReturnsMatrix,
    ball: &BallSpec,
    settings: &SolverSettings,
) -> BarrierOutcome {
    let n = samples.n_assets();
    let n_samples = samples.n_samples();
    let power = ball.conjugate_exponent().zip(ball.perspective_coefficient());
    let dual = ball.dual_norm();
    let problem = Problem {
        samples,
        n,
        n_samples,
        power,
        eps_p: ball.epsilon().powf(ball.p()),
        dual,
        epigraph: power.is_some() && dual == GroundNorm::Linf,
        floor_w: settings.floor_w,
    };

    let w = vec![1.0 / n as f64; n];
    let v: Vec<Vec<f64>> = samples.samples().map(|r| gibbs(&w, r)).collect();
    let t: Vec<f64> = if problem.epigraph {
        v.iter().map(|row| row.iter().fold(0.0f64, |m, &x| m.max(x)) + 0.5).collect()
    } else {
        Vec::new()
    };
    let lambda = match power {
        Some((q, c)) => {
            let s: f64 = v
                .iter()
                .zip(t.iter().map(Some).chain(std::iter::repeat(None)))
                .map(|(row, tj)| match dual {
                    GroundNorm::Linf => tj.copied().unwrap_or(1.0).powf(q),
                    other => other.eval(row).powf(q),
                })
                .sum();
            // argmin_λ c λ^{1−q} S + N λ εᵖ
            (c * (q - 1.0) * s / (n_samples as f64 * problem.eps_p)).powf(1.0 / q)
        }
        None => {
            let worst = v.iter().map(|row| dual.eval(row)).fold(0.0f64, f64::max);
            2.0 * worst.max(1.0)
        }
    };
    let mut it = Iterate { w, lambda, v, t };

    let count = problem.barrier_count();
    let scale = n_samples as f64;
    let mut mu = 0.1 * scale / count;
    let mu_final = 1e-2 * settings.tol_rel * scale / count;
    let newton_tol = 1e-13 * scale;
    let mut iterations = 0;

    loop {
        let mut centred = false;
        while iterations < settings.max_iter {
            let asm = problem.assemble(&it, mu);
            let Some(step) = problem.newton_step(&it, &asm) else {
                break;
            };
            iterations += 1;
            let decrement = -step.slope;
            let residual = (1.0 - it.w.iter().sum::<f64>()).abs();
            if decrement * 0.5 <= newton_tol && residual < 1e-13 {
                centred = true;
                break;
            }
            let psi0 = problem.value(&it, mu).unwrap_or(f64::INFINITY);
            let mut t = problem.max_step(&it, &step);
            let mut accepted = false;
            for _ in 0..80 {
                let trial = problem.apply(&it, &step, t);
                if let Some(psi) = problem.value(&trial, mu) {
                    let armijo = psi <= psi0 + 1e-4 * t * step.slope.min(0.0);
                    // Below the value's resolution take the step if it is full.
                    let tiny = decrement < 1e-10 * scale && t >= 0.5;
                    if armijo || tiny {
                        it = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                centred = decrement * 0.5 <= 1e-9 * scale;
                break;
            }
        }
        if !centred {
            return BarrierOutcome {
                iterate: it,
                iterations,
                converged: false,
                gap_bound: count * mu / scale,
            };
        }
        if mu <= mu_final {
            return BarrierOutcome {
                iterate: it,
                iterations,
                converged: true,
                gap_bound: count * mu / scale,
            };
        }
        mu = (mu * 0.1).max(mu_final);
    }
}
