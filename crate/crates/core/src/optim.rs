//! Limited-memory BFGS framed as maximisation, plus a central-difference
//! gradient used to certify analytic gradients.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::dot;

/// A smooth objective to be maximised.
pub trait Objective {
    fn dimension(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.gradient(x))
    }
}

/// Adapts a closure returning `(value, gradient)`.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Objective for FnObjective<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x).0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x).1
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop when the gradient's ∞-norm drops below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            memory: 7,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// The line search could not find an acceptable step; the best iterate
    /// so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

/// Maximises `obj` from `x0`. Accepted iterates never decrease the objective.
pub fn lbfgs_maximize(obj: &dyn Objective, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome> {
    if x0.len() != obj.dimension() {
        return Err(Error::DimensionMismatch { expected: obj.dimension(), actual: x0.len() });
    }
    if cfg.memory == 0 {
        return Err(Error::InvalidArgument("L-BFGS memory must be positive".into()));
    }
    // Minimise the negated objective internally.
    let eval = |x: &[f64]| {
        let (v, g) = obj.value_and_gradient(x);
        (-v, g.into_iter().map(|gi| -gi).collect::<Vec<f64>>())
    };
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = eval(&x);
    let mut evaluations = 1;
    if !fx.is_finite() || gx.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective or gradient at the L-BFGS starting point".into()));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if inf_norm(&gx) < cfg.grad_tol {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut dir = two_loop(&gx, &history);
        let mut slope = dot(&dir, &gx);
        if !(slope < 0.0) {
            // Curvature pairs went stale; fall back to steepest descent.
            history.clear();
            dir = gx.iter().map(|g| -g).collect();
            slope = dot(&dir, &gx);
        }
        let initial = if history.is_empty() { (1.0 / inf_norm(&gx)).min(1.0) } else { 1.0 };
        let step = match line_search(&eval, &x, fx, slope, &dir, initial, &mut evaluations) {
            Some(s) => s,
            None => {
                log::warn!("L-BFGS line search failed at iteration {iterations}; keeping best iterate");
                status = LbfgsStatus::LineSearchFailed;
                break;
            }
        };
        iterations += 1;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        fx = step.value;
        gx = step.grad;
    }
    if status == LbfgsStatus::MaxIterations && inf_norm(&gx) < cfg.grad_tol {
        status = LbfgsStatus::Converged;
    }
    Ok(LbfgsOutcome {
        x,
        value: -fx,
        iterations,
        evaluations,
        status,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// `-H·g` from the stored curvature pairs.
fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

struct Step {
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
    alpha: f64,
}

/// Strong-Wolfe search along `dir` (minimisation), followed by one secant
/// refinement on the directional derivative. The refinement lands exactly on
/// the minimiser when the objective is quadratic along the line.
fn line_search(
    eval: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    x: &[f64],
    f0: f64,
    slope0: f64,
    dir: &[f64],
    initial: f64,
    evaluations: &mut usize,
) -> Option<Step> {
    let try_at = |alpha: f64, evaluations: &mut usize| -> Option<Step> {
        *evaluations += 1;
        let xt: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        let (v, g) = eval(&xt);
        if !v.is_finite() || g.iter().any(|gi| !gi.is_finite()) {
            return None;
        }
        let slope = dot(&g, dir);
        Some(Step { x: xt, value: v, grad: g, slope, alpha })
    };
    let armijo = |s: &Step| s.value <= f0 + WOLFE_C1 * s.alpha * slope0;
    let curvature = |s: &Step| s.slope.abs() <= WOLFE_C2 * slope0.abs();

    // `lo` is the best Armijo point so far, `hi` bounds the bracket.
    let (mut lo_alpha, mut lo_value, mut lo_slope) = (0.0, f0, slope0);
    let mut lo_step: Option<Step> = None;
    let (mut hi_alpha, mut hi_value) = (f64::INFINITY, f64::INFINITY);
    let mut alpha = initial;
    let mut accepted: Option<Step> = None;

    for _ in 0..MAX_LINE_EVALS {
        match try_at(alpha, evaluations) {
            None => {
                hi_alpha = alpha;
                hi_value = f64::INFINITY;
            }
            Some(trial) => {
                if !armijo(&trial) || trial.value >= lo_value {
                    hi_alpha = alpha;
                    hi_value = trial.value;
                } else if curvature(&trial) {
                    accepted = Some(trial);
                    break;
                } else {
                    if trial.slope * (hi_alpha - lo_alpha) >= 0.0 {
                        hi_alpha = lo_alpha;
                        hi_value = lo_value;
                    }
                    lo_alpha = alpha;
                    lo_value = trial.value;
                    lo_slope = trial.slope;
                    lo_step = Some(trial);
                }
            }
        }
        alpha = if hi_alpha.is_finite() {
            let (a, b) = if lo_alpha < hi_alpha { (lo_alpha, hi_alpha) } else { (hi_alpha, lo_alpha) };
            if b - a <= 1e-14 * b.max(1e-300) {
                break;
            }
            let w = hi_alpha - lo_alpha;
            let c = (hi_value - lo_value - lo_slope * w) / (w * w);
            let cand = lo_alpha - lo_slope / (2.0 * c);
            let margin = 0.1 * (b - a);
            if c > 0.0 && cand.is_finite() && cand > a + margin && cand < b - margin {
                cand
            } else {
                0.5 * (a + b)
            }
        } else {
            alpha * 2.0
        };
    }

    let best = accepted.or(lo_step)?;
    if best.slope > slope0 {
        let refined_alpha = best.alpha * slope0 / (slope0 - best.slope);
        if refined_alpha.is_finite() && refined_alpha > 0.0 && (refined_alpha - best.alpha).abs() > 1e-10 * best.alpha {
            if let Some(r) = try_at(refined_alpha, evaluations) {
                if r.value <= best.value && armijo(&r) {
                    return Some(r);
                }
            }
        }
    }
    Some(best)
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}
