//! Projected limited-memory BFGS for box-constrained minimization.
//!
//! Variables sitting on a bound with the gradient pushing outward are held
//! fixed; the two-loop recursion runs on the remaining free variables, and a
//! backtracking Armijo search is done along the projected path
//! `P(x + alpha d)`. Projection is what lets coordinates land exactly on
//! their bounds, which is how weights are switched off.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxQnConfig {
    pub max_iter: usize,
    /// Infinity norm of the projected gradient at which to stop.
    pub grad_tol: f64,
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Relative objective decrease below which to stop.
    #[serde(default = "default_ftol")]
    pub ftol: f64,
}

fn default_ftol() -> f64 {
    1e-12
}

impl Default for BoxQnConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            memory: 10,
            ftol: default_ftol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQnResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn is_fixed(x: f64, g: f64, lo: f64, hi: f64) -> bool {
    (x <= lo && g > 0.0) || (x >= hi && g < 0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over `lower <= x <= upper`. `f` returns the value and the
/// gradient; a non-finite value marks an infeasible point and is
/// backtracked away from. The returned point is never worse than `x0`.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &BoxQnConfig) -> BoxQnResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let result = |x: Vec<f64>, f: f64, it, ev, conv, ls| BoxQnResult {
        x,
        f,
        iterations: it,
        evaluations: ev,
        converged: conv,
        line_search_failed: ls,
    };
    if !fx.is_finite() {
        return result(x, fx, 0, evaluations, false, true);
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for iter in 0..cfg.max_iter {
        let free: Vec<bool> = (0..n).map(|i| !is_fixed(x[i], g[i], lower[i], upper[i])).collect();
        let pg_norm = (0..n)
            .filter(|&i| free[i])
            .map(|i| {
                // distance the gradient step can actually move before hitting a bound
                let stepped = (x[i] - g[i]).clamp(lower[i], upper[i]);
                (stepped - x[i]).abs()
            })
            .fold(0.0, f64::max);
        if pg_norm <= cfg.grad_tol {
            return result(x, fx, iter, evaluations, true, false);
        }

        let mut attempt = 0;
        loop {
            let d = if s_hist.is_empty() {
                let gn = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
                let scale = if gn > 0.0 { 1.0 / gn.max(1.0) } else { 1.0 };
                (0..n).map(|i| if free[i] { -g[i] * scale } else { 0.0 }).collect::<Vec<_>>()
            } else {
                two_loop(&g, &free, &s_hist, &y_hist)
            };
            let slope: f64 = dot(&g, &d);
            if !(slope < 0.0) {
                if s_hist.is_empty() {
                    return result(x, fx, iter, evaluations, true, false);
                }
                s_hist.clear();
                y_hist.clear();
                continue;
            }

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut xn: Vec<f64> = (0..n).map(|i| x[i] + alpha * d[i]).collect();
                project(&mut xn, lower, upper);
                let step: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
                if step.iter().all(|s| *s == 0.0) {
                    break;
                }
                let (fn_, gn) = f(&xn);
                evaluations += 1;
                if fn_.is_finite() && fn_ <= fx + 1e-4 * dot(&g, &step).min(0.0) && fn_ <= fx {
                    accepted = Some((xn, fn_, gn, step));
                    break;
                }
                alpha *= if fn_.is_finite() { 0.5 } else { 0.1 };
            }

            match accepted {
                Some((xn, fn_, gn, step)) => {
                    let yv: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
                    let sy = dot(&step, &yv);
                    if sy > 1e-12 * dot(&yv, &yv).max(f64::MIN_POSITIVE) {
                        s_hist.push(step);
                        y_hist.push(yv);
                        if s_hist.len() > cfg.memory.max(1) {
                            s_hist.remove(0);
                            y_hist.remove(0);
                        }
                    }
                    let decrease = fx - fn_;
                    x = xn;
                    g = gn;
                    let prev = fx;
                    fx = fn_;
                    if decrease <= cfg.ftol * prev.abs().max(fx.abs()).max(1.0) {
                        return result(x, fx, iter + 1, evaluations, true, false);
                    }
                    break;
                }
                None => {
                    if attempt == 0 && !s_hist.is_empty() {
                        s_hist.clear();
                        y_hist.clear();
                        attempt += 1;
                        continue;
                    }
                    return result(x, fx, iter, evaluations, false, true);
                }
            }
        }
    }
    result(x, fx, cfg.max_iter, evaluations, false, false)
}

/// `-H g` over the free variables from the stored correction pairs.
fn two_loop(g: &[f64], free: &[bool], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect() };
    let mut q = mask(g);
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    let ss: Vec<Vec<f64>> = s_hist.iter().map(|s| mask(s)).collect();
    let ys: Vec<Vec<f64>> = y_hist.iter().map(|y| mask(y)).collect();
    let rho: Vec<f64> = (0..k)
        .map(|i| {
            let sy = dot(&ss[i], &ys[i]);
            if sy > 0.0 {
                1.0 / sy
            } else {
                0.0
            }
        })
        .collect();
    for i in (0..k).rev() {
        alphas[i] = rho[i] * dot(&ss[i], &q);
        for j in 0..q.len() {
            q[j] -= alphas[i] * ys[i][j];
        }
    }
    let last = k - 1;
    let yy = dot(&ys[last], &ys[last]);
    let gamma = if rho[last] > 0.0 && yy > 0.0 { 1.0 / (rho[last] * yy) } else { 1.0 };
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for i in 0..k {
        let beta = rho[i] * dot(&ys[i], &q);
        for j in 0..q.len() {
            q[j] += ss[i][j] * (alphas[i] - beta);
        }
    }
    q.iter().zip(free).map(|(v, f)| if *f { -v } else { 0.0 }).collect()
}
