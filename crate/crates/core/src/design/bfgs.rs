//! Dense BFGS with backtracking Armijo line search.

/// Sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Step shrink factor per backtracking trial.
pub const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
/// Relative decrease at or below which an accepted step counts as no progress.
pub const NO_PROGRESS_TOL: f64 = 1e-15;
/// Consecutive no-progress iterations before giving up.
pub const NO_PROGRESS_ITERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    MaxIters,
    /// Objective or gradient is exactly zero.
    Optimal,
    /// No step satisfying the Armijo condition was found.
    LineSearch,
    /// The objective returned NaN.
    NotFinite,
    /// Accepted steps stopped decreasing the objective.
    NoProgress,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: Stop,
}

/// Minimizes `f` starting from `x` (updated in place).
///
/// `f(x, grad)` returns the objective and writes the gradient. `+∞` is
/// allowed and simply rejected by the line search.
pub fn minimize<F>(x: &mut [f64], max_iters: usize, mut f: F) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut evaluations = 1;
    if fx.is_nan() || g.iter().any(|v| v.is_nan()) {
        return Outcome { value: fx, iterations: 0, evaluations, stop: Stop::NotFinite };
    }
    if n == 0 {
        return Outcome { value: fx, iterations: 0, evaluations, stop: Stop::Optimal };
    }

    // Inverse Hessian approximation, row-major; `None` means a scaled identity.
    let mut h: Option<Vec<f64>> = None;
    let mut h0 = 1.0;
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut idle = 0;

    for iter in 0..max_iters {
        if fx == 0.0 || g.iter().all(|v| *v == 0.0) {
            return Outcome { value: fx, iterations: iter, evaluations, stop: Stop::Optimal };
        }
        let mut reset_tried = false;
        loop {
            direction(h.as_deref(), h0, &g, &mut p);
            let mut slope: f64 = dot(&g, &p);
            if !(slope < 0.0) {
                // Not a descent direction; fall back to steepest descent.
                h = None;
                p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -h0 * gi);
                slope = dot(&g, &p);
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    x_new[i] = x[i] + alpha * p[i];
                }
                let f_new = f(&x_new, &mut g_new);
                evaluations += 1;
                if f_new.is_nan() {
                    return Outcome { value: f_new, iterations: iter, evaluations, stop: Stop::NotFinite };
                }
                if f_new <= fx + ARMIJO_C * alpha * slope && f_new <= fx {
                    accepted = true;
                    idle = if fx - f_new <= NO_PROGRESS_TOL * fx.abs() { idle + 1 } else { 0 };
                    for i in 0..n {
                        s[i] = x_new[i] - x[i];
                        y[i] = g_new[i] - g[i];
                    }
                    x.copy_from_slice(&x_new);
                    g.copy_from_slice(&g_new);
                    fx = f_new;
                    break;
                }
                alpha *= BACKTRACK;
            }
            if accepted {
                break;
            }
            if reset_tried || h.is_none() {
                return Outcome { value: fx, iterations: iter, evaluations, stop: Stop::LineSearch };
            }
            reset_tried = true;
            h = None;
        }

        if idle >= NO_PROGRESS_ITERS {
            return Outcome { value: fx, iterations: iter + 1, evaluations, stop: Stop::NoProgress };
        }
        let sy = dot(&s, &y);
        if sy > 0.0 && sy.is_finite() {
            let hm = h.get_or_insert_with(|| {
                // Shanno-Phua initial scaling before the first update.
                h0 = sy / dot(&y, &y);
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = h0;
                }
                m
            });
            bfgs_update(hm, n, &s, &y, sy, &mut hy);
        }
    }
    Outcome { value: fx, iterations: max_iters, evaluations, stop: Stop::MaxIters }
}

fn direction(h: Option<&[f64]>, h0: f64, g: &[f64], p: &mut [f64]) {
    let n = g.len();
    match h {
        None => p.iter_mut().zip(g).for_each(|(pi, gi)| *pi = -h0 * gi),
        Some(h) => {
            for i in 0..n {
                p[i] = -dot(&h[i * n..(i + 1) * n], g);
            }
        }
    }
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`, expanded to avoid forming products.
fn bfgs_update(h: &mut [f64], n: usize, s: &[f64], y: &[f64], sy: f64, hy: &mut [f64]) {
    let rho = 1.0 / sy;
    for i in 0..n {
        hy[i] = dot(&h[i * n..(i + 1) * n], y);
    }
    let yhy = dot(y, hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        let row = &mut h[i * n..(i + 1) * n];
        let si = s[i];
        let hyi = hy[i];
        for j in 0..n {
            row[j] += coef * si * s[j] - rho * (hyi * s[j] + si * hy[j]);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn solves_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let out = minimize(&mut x, 500, rosenbrock);
        assert!(out.value < 1e-20, "{out:?}");
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_converges_exactly() {
        let mut x = vec![3.0, -2.0, 1.0];
        let out = minimize(&mut x, 100, |x, g| {
            let w = [1.0, 10.0, 100.0];
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * w[i] * x[i];
                f += w[i] * x[i] * x[i];
            }
            f
        });
        assert!(out.value < 1e-25);
    }

    #[test]
    fn accepted_steps_never_increase() {
        let mut x = vec![-1.2, 1.0];
        let mut accepted = Vec::new();
        let mut last = f64::INFINITY;
        minimize(&mut x, 200, |x, g| {
            let v = rosenbrock(x, g);
            if v <= last {
                accepted.push(v);
                last = v;
            }
            v
        });
        assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nan_is_reported() {
        let mut x = vec![1.0];
        let out = minimize(&mut x, 10, |_, g| {
            g[0] = 1.0;
            f64::NAN
        });
        assert_eq!(out.stop, Stop::NotFinite);
    }
}
