//! Limited-memory BFGS with a backtracking Armijo line search, plus a
//! central-difference gradient helper for objectives without one.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the relative decrease stays below this for `patience` iterations.
    pub f_tol: f64,
    pub g_tol: f64,
    pub patience: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 12, max_iter: 2000, f_tol: 1e-12, g_tol: 1e-10, patience: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective`, which returns the value and fills the gradient.
/// Non-finite values are treated as `+∞` by the line search.
pub fn lbfgs<F>(mut objective: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = objective(&x, &mut grad);
    if !value.is_finite() {
        return Minimum { x, value, iterations: 0, converged: false };
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalled = 0;
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];
    let mut direction = vec![0.0; n];

    for iter in 0..cfg.max_iter {
        let gnorm = dot(&grad, &grad).sqrt();
        if gnorm <= cfg.g_tol * (1.0 + value.abs()) {
            return Minimum { x, value, iterations: iter, converged: true };
        }

        // two-loop recursion
        direction.copy_from_slice(&grad);
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &direction);
            for i in 0..n {
                direction[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1e-300),
        };
        for d in direction.iter_mut() {
            *d *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &direction);
            for i in 0..n {
                direction[i] += s[i] * (a - b);
            }
        }
        for d in direction.iter_mut() {
            *d = -*d;
        }
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            history.clear();
            for i in 0..n {
                direction[i] = -grad[i] / gnorm.max(1e-300);
            }
            slope = dot(&grad, &direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * direction[i];
            }
            let fv = objective(&trial, &mut trial_grad);
            if fv.is_finite() && fv <= value + 1e-4 * step * slope {
                accepted = Some(fv);
                break;
            }
            // safeguarded quadratic interpolation
            let next = if fv.is_finite() {
                let denom = 2.0 * (fv - value - step * slope);
                if denom > 0.0 {
                    (-slope * step * step / denom).clamp(0.1 * step, 0.5 * step)
                } else {
                    0.5 * step
                }
            } else {
                0.25 * step
            };
            step = next;
        }
        let Some(new_value) = accepted else {
            if history.is_empty() {
                return Minimum { x, value, iterations: iter, converged: false };
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| trial_grad[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            history.push_back((s, y, 1.0 / sy));
            if history.len() > cfg.memory {
                history.pop_front();
            }
        }
        let decrease = value - new_value;
        x.copy_from_slice(&trial);
        grad.copy_from_slice(&trial_grad);
        value = new_value;
        if decrease <= cfg.f_tol * value.abs().max(1e-300) {
            stalled += 1;
            if stalled >= cfg.patience {
                return Minimum { x, value, iterations: iter + 1, converged: true };
            }
        } else {
            stalled = 0;
        }
    }
    Minimum { x, value, iterations: cfg.max_iter, converged: false }
}

/// Central-difference gradient with relative step `h`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: f64, grad: &mut [f64]) {
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
}
