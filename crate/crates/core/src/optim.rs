//! Small unconstrained minimizers: Nelder–Mead and BFGS.
//!
//! Objectives may return `+∞` to mark infeasible points; both methods treat
//! such points as worse than any finite value.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when `f_worst − f_best ≤ f_rel_tol · (|f_best| + 1e-12)`.
    pub f_rel_tol: f64,
    /// Initial simplex edge along each axis.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            f_rel_tol: 1e-8,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Adaptive-coefficient Nelder–Mead (Gao & Han parameters).
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if best.is_finite() && worst - best <= opts.f_rel_tol * (best.abs() + 1e-12) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&x_best) {
                *xi = bi + sigma * (*xi - bi);
            }
            *v = eval(x, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, iterations, evaluations: evals, converged }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the Euclidean gradient norm falls below this.
    pub g_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            g_tol: 1e-9,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS on the inverse Hessian with a weak-Wolfe bisection line search.
/// `fg(x, g)` returns `f(x)` and writes the gradient into `g`.
pub fn bfgs(fg: impl Fn(&[f64], &mut [f64]) -> f64, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut evals = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum { x, f: f64::INFINITY, iterations: 0, evaluations: evals, converged: false };
    }
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut iterations = 0;
    let mut converged = norm(&g) < opts.g_tol;
    let (mut x_new, mut g_new, mut dir) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // lost positive definiteness: restart from steepest descent
            for i in 0..n {
                h.iter_mut().skip(i * n).take(n).for_each(|v| *v = 0.0);
                h[i * n + i] = 1.0;
                dir[i] = -g[i];
            }
            slope = -dot(&g, &g);
            first = true;
        }
        if first {
            // keep the very first trial step modest
            let scale = (1.0 / norm(&dir)).min(1.0);
            dir.iter_mut().for_each(|v| *v *= scale);
            slope *= scale;
        }
        let (mut lo, mut hi, mut t) = (0.0, f64::INFINITY, 1.0);
        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..30 {
            for i in 0..n {
                x_new[i] = x[i] + t * dir[i];
            }
            f_new = fg(&x_new, &mut g_new);
            evals += 1;
            if !(f_new.is_finite() && f_new <= f + C1 * t * slope) || g_new.iter().any(|v| !v.is_finite()) {
                hi = t;
            } else if dot(&g_new, &dir) < C2 * slope {
                lo = t;
            } else {
                accepted = true;
                break;
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        }
        if !accepted {
            // accept any strict decrease found on the way, otherwise stop
            if !(f_new.is_finite() && f_new < f) {
                if lo > 0.0 {
                    for i in 0..n {
                        x_new[i] = x[i] + lo * dir[i];
                    }
                    f_new = fg(&x_new, &mut g_new);
                    evals += 1;
                }
                if !(f_new.is_finite() && f_new < f) {
                    break;
                }
            }
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        if norm(&g) < opts.g_tol {
            converged = true;
            break;
        }
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }
    Minimum { x, f, iterations, evaluations: evals, converged }
}
