//! Derivative-free and quasi-Newton minimizers plus finite-difference
//! derivatives. Objectives may return `+inf` for rejected points; both
//! methods treat such evaluations as ordinary bad values.

use crate::linalg::SymMat;

/// Standard Nelder-Mead with reflection/expansion/contraction/shrink
/// coefficients (1, 2, 0.5, 0.5).
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOpts {
    /// Evaluation budget; the default driver uses `200 · #params`.
    pub max_evals: usize,
    /// Stop when the simplex's relative function spread falls below this.
    pub f_tol: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub simplex_edge: f64,
}

impl Default for NelderMeadOpts {
    fn default() -> Self {
        NelderMeadOpts {
            max_evals: 0, // filled per-problem as 200·n
            f_tol: 1e-10,
            simplex_edge: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOpts,
) -> NelderMeadResult {
    let n = x0.len();
    let max_evals = if opts.max_evals == 0 {
        200 * n
    } else {
        opts.max_evals
    };
    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.simplex_edge;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut converged = false;
    while evals < max_evals {
        // order ascending
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reorder: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let refvals: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = reorder;
        fvals = refvals;

        let best = fvals[0];
        let worst = fvals[n];
        if worst.is_finite() && (worst - best).abs() <= opts.f_tol * (best.abs() + opts.f_tol) {
            converged = true;
            break;
        }

        // centroid of all but worst
        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + t * (x - y)).collect()
        };

        let reflected = combine(&centroid, &simplex[n], alpha);
        let fr = eval(&reflected, &mut evals);
        if fr < fvals[0] {
            let expanded = combine(&centroid, &simplex[n], gamma);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[n] = expanded;
                fvals[n] = fe;
            } else {
                simplex[n] = reflected;
                fvals[n] = fr;
            }
        } else if fr < fvals[n - 1] {
            simplex[n] = reflected;
            fvals[n] = fr;
        } else {
            // contraction (outside if the reflection improved on the worst)
            let contracted = if fr < fvals[n] {
                combine(&centroid, &simplex[n], rho)
            } else {
                combine(&centroid, &simplex[n], -rho)
            };
            let fc = eval(&contracted, &mut evals);
            if fc < fvals[n].min(fr) {
                simplex[n] = contracted;
                fvals[n] = fc;
            } else {
                // shrink toward the best vertex
                for i in 1..=n {
                    let v: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(x, b)| b + shrink * (x - b))
                        .collect();
                    fvals[i] = eval(&v, &mut evals);
                    simplex[i] = v;
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    NelderMeadResult {
        x: simplex[best].clone(),
        fx: fvals[best],
        evals,
        converged,
    }
}

/// Central-difference gradient with per-coordinate step
/// `h_k = cbrt(eps) · (1 + |x_k|)`.
pub fn central_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h_scale = f64::EPSILON.cbrt();
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = h_scale * (1.0 + x[k].abs());
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central second-difference Hessian with per-coordinate step
/// `h_k = step_scale · (1 + |x_k|)`.
pub fn central_hessian(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    step_scale: f64,
) -> SymMat {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| step_scale * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut out = SymMat::zeros(n);
    let mut xp = x.to_vec();
    for k in 0..n {
        xp[k] = x[k] + h[k];
        let fp = f(&xp);
        xp[k] = x[k] - h[k];
        let fm = f(&xp);
        xp[k] = x[k];
        out.set(k, k, (fp - 2.0 * f0 + fm) / (h[k] * h[k]));
    }
    for k in 0..n {
        for l in 0..k {
            xp[k] = x[k] + h[k];
            xp[l] = x[l] + h[l];
            let fpp = f(&xp);
            xp[l] = x[l] - h[l];
            let fpm = f(&xp);
            xp[k] = x[k] - h[k];
            xp[l] = x[l] + h[l];
            let fmp = f(&xp);
            xp[l] = x[l] - h[l];
            let fmm = f(&xp);
            xp[k] = x[k];
            xp[l] = x[l];
            out.set(k, l, (fpp - fpm - fmp + fmm) / (4.0 * h[k] * h[l]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOpts {
    pub max_iter: usize,
    /// Max-norm gradient threshold.
    pub grad_tol: f64,
    /// Relative objective-change threshold.
    pub f_tol: f64,
}

impl Default for BfgsOpts {
    fn default() -> Self {
        BfgsOpts {
            max_iter: 500,
            grad_tol: 1e-5,
            f_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// BFGS with an inverse-Hessian approximation, central-difference
/// gradients and backtracking Armijo line search.
pub fn bfgs(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], opts: &BfgsOpts) -> BfgsResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut grad = central_gradient(f, &x);
    let mut h_inv = SymMat::identity(n); // dense symmetric inverse-Hessian
    let mut converged = false;
    let mut iterations = 0;
    let mut stall = 0usize;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let gnorm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }

        // direction p = −H⁻¹ g
        let mut p = h_inv.matvec(&grad);
        p.iter_mut().for_each(|v| *v = -*v);
        let mut slope: f64 = p.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            // reset a corrupted curvature model
            h_inv = SymMat::identity(n);
            p = grad.iter().map(|v| -v).collect();
            slope = -grad.iter().map(|v| v * v).sum::<f64>();
        }

        // backtracking Armijo
        let mut step = 1.0f64;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * p[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent at line-search resolution
            converged = gnorm < 10.0 * opts.grad_tol;
            break;
        }

        let grad_new = central_gradient(f, &x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ
            let rho = 1.0 / sy;
            let hy = h_inv.matvec(&y);
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..=i {
                    let v = h_inv.get(i, j) - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                    h_inv.set(i, j, v);
                }
            }
        }

        let f_change = (fx - f_new).abs() / (fx.abs().max(1.0));
        x = x_new;
        fx = f_new;
        grad = grad_new;
        let gnorm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }
        // several consecutive negligible objective changes mean the
        // line search is grinding against the objective's resolution
        if f_change < opts.f_tol {
            stall += 1;
            if stall >= 3 {
                converged = gnorm < 10.0 * opts.grad_tol;
                break;
            }
        } else {
            stall = 0;
        }
    }

    BfgsResult {
        x,
        fx,
        grad,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct NewtonRefineResult {
    pub x: Vec<f64>,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fixed-Hessian Newton refinement. Near the optimum a quasi-Newton
/// line search stops making measurable progress long before the
/// gradient is resolved; with the (already computed) Hessian in hand,
/// damped Newton steps close the remaining gap in a few iterations.
/// `hess` is the Hessian of the function being minimized and must be
/// positive definite.
pub fn newton_refine(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    hess: &SymMat,
    grad_tol: f64,
    max_iter: usize,
) -> NewtonRefineResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut grad = central_gradient(f, &x);
    let chol = match hess.cholesky() {
        Ok(c) => c,
        Err(_) => {
            return NewtonRefineResult {
                x,
                grad,
                iterations: 0,
                converged: false,
            }
        }
    };
    let mut iterations = 0;
    let mut converged = grad.iter().fold(0.0f64, |m, v| m.max(v.abs())) < grad_tol;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut p = chol.solve(&grad);
        p.iter_mut().for_each(|v| *v = -*v);
        let mut accepted = false;
        let mut step = 1.0;
        let mut x_new = x.clone();
        for _ in 0..20 {
            for i in 0..n {
                x_new[i] = x[i] + step * p[i];
            }
            let f_new = f(&x_new);
            if f_new <= fx {
                x.copy_from_slice(&x_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        grad = central_gradient(f, &x);
        converged = grad.iter().fold(0.0f64, |m, v| m.max(v.abs())) < grad_tol;
    }
    NewtonRefineResult {
        x,
        grad,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() - 1 {
            s += 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2);
        }
        s
    }

    fn quadratic(x: &[f64]) -> f64 {
        // convex anisotropic bowl with minimum at (1, −2, 3)
        let c = [1.0, -2.0, 3.0];
        let w = [1.0, 4.0, 0.5];
        x.iter()
            .zip(c.iter().zip(w))
            .map(|(xi, (ci, wi))| wi * (xi - ci).powi(2))
            .sum()
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let mut f = |x: &[f64]| quadratic(x);
        let r = nelder_mead(&mut f, &[0.0, 0.0, 0.0], &NelderMeadOpts::default());
        for (xi, ci) in r.x.iter().zip(&[1.0, -2.0, 3.0]) {
            assert!((xi - ci).abs() < 1e-3, "{:?}", r.x);
        }
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let mut f = |x: &[f64]| rosenbrock(x);
        let r = bfgs(&mut f, &[-1.2, 1.0], &BfgsOpts::default());
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-4);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_handles_infinite_rejections() {
        // a barrier outside the unit box
        let mut f = |x: &[f64]| {
            if x.iter().any(|v| v.abs() > 4.0) {
                f64::INFINITY
            } else {
                quadratic(x)
            }
        };
        let r = bfgs(&mut f, &[0.5, 0.5, 0.5], &BfgsOpts::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4);
        assert!((r.x[1] + 2.0).abs() < 1e-4);
        assert!((r.x[2] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn finite_difference_derivatives_match_analytic() {
        let mut f = |x: &[f64]| x[0] * x[0] * x[1] + x[1].powi(3);
        let x = [1.5, -0.5];
        let g = central_gradient(&mut f, &x);
        assert!((g[0] - 2.0 * 1.5 * -0.5).abs() < 1e-8);
        assert!((g[1] - (1.5f64.powi(2) + 3.0 * 0.25)).abs() < 1e-8);
        let h = central_hessian(&mut f, &x, 1e-4);
        assert!((h.get(0, 0) - 2.0 * -0.5).abs() < 1e-5);
        assert!((h.get(0, 1) - 2.0 * 1.5).abs() < 1e-5);
        assert!((h.get(1, 1) - 6.0 * -0.5).abs() < 1e-5);
    }
}
