//! Dense BFGS with backtracking (Armijo) line search.
//!
//! Every accepted step strictly lowers the objective, so the returned value
//! never exceeds the starting value.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction of its current value.
    pub tol: f64,
    /// Stop once the objective falls to or below this absolute value.
    pub value_floor: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tol: 1e-8,
            value_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub start_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

/// Minimizes `f`, which returns the value and writes the gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let start_value = fx;
    let mut evaluations = 1;
    let mut h = identity(n);
    let mut h_scaled = false;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    if !fx.is_finite() || n == 0 {
        return BfgsOutcome {
            x,
            value: fx,
            start_value,
            iterations: 0,
            evaluations,
            converged: n == 0,
        };
    }

    for iter in 0..opts.max_iterations {
        if fx <= opts.value_floor || norm(&g) == 0.0 {
            return done(x, fx, start_value, iter, evaluations, true);
        }
        mat_vec(&h, &g, &mut dir);
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Curvature information went bad; fall back to steepest descent.
            h = identity(n);
            h_scaled = false;
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&g, &dir);
        }
        // Before any curvature is known, take a unit-length first step.
        let mut step = if h_scaled { 1.0 } else { 1.0 / norm(&dir).max(1e-300) };

        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            if f_new.is_finite() && f_new <= fx + ARMIJO * step * slope && f_new < fx {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    if !h_scaled {
                        let scale = sy / dot(&y, &y);
                        h.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= scale));
                        h_scaled = true;
                    }
                    update_inverse_hessian(&mut h, &s, &y, sy);
                }
                let decrease = fx - f_new;
                let small = decrease <= opts.tol * fx.abs();
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                if small {
                    return done(x, fx, start_value, iter + 1, evaluations, true);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if h_scaled {
                // Retry from steepest descent before declaring a stationary point.
                h = identity(n);
                h_scaled = false;
                continue;
            }
            return done(x, fx, start_value, iter + 1, evaluations, true);
        }
    }
    done(x, fx, start_value, opts.max_iterations, evaluations, false)
}

fn done(x: Vec<f64>, value: f64, start_value: f64, iterations: usize, evaluations: usize, converged: bool) -> BfgsOutcome {
    BfgsOutcome {
        x,
        value,
        start_value,
        iterations,
        evaluations,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m) {
        *o = dot(row, v);
    }
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1 / sᵀy`.
fn update_inverse_hessian(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let mut hy = vec![0.0; n];
    mat_vec(h, y, &mut hy);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Central-difference gradient with per-coordinate step `h·max(1, |x_i|)`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Adapts a value-only objective to [`minimize`] using finite differences.
pub fn with_finite_differences<F>(mut f: F, h: f64) -> impl FnMut(&[f64], &mut [f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    move |x, grad| {
        let g = finite_difference_gradient(&mut f, x, h);
        grad.copy_from_slice(&g);
        f(x)
    }
}
