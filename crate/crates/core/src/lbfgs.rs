//! Limited-memory BFGS with a backtracking line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop when `|grad| <= gradient_tolerance * max(1, |f|)`.
    pub gradient_tolerance: f64,
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iters: 500,
            gradient_tolerance: 1e-9,
            memory: 10,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `objective`, which returns `None` outside its domain.
///
/// The starting point must lie in the domain; if it does not, the report
/// carries `f = +inf` and `converged = false`.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsReport
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut evaluations = 1;
    let Some((mut f, mut g)) = objective(&x0) else {
        return LbfgsReport {
            x: x0,
            f: f64::INFINITY,
            grad_norm: f64::INFINITY,
            iterations: 0,
            evaluations,
            converged: false,
        };
    };
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let stationary = |f: f64, g: &[f64]| norm(g) <= opts.gradient_tolerance * f.abs().max(1.0);

    let mut iterations = 0;
    while iterations < opts.max_iters && !stationary(f, &g) {
        iterations += 1;

        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / norm(&g).max(1.0));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v / norm(&g).max(1.0)).collect();
            slope = dot(&g, &d);
        }

        let gnorm = norm(&g);
        let slack = 1e-14 * f.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            evaluations += 1;
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() {
                    let armijo = ft <= f + opts.armijo * step * slope;
                    // Near the optimum f differences drown in rounding; accept
                    // steps that stay level and shrink the gradient.
                    let level = ft <= f + slack && norm(&gt) < gnorm;
                    if armijo || level {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fnew;
        g = gn;
    }
    LbfgsReport {
        grad_norm: norm(&g),
        converged: stationary(f, &g),
        x,
        f,
        iterations,
        evaluations,
    }
}
