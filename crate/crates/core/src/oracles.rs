//! Independent ground-truth engines: Gauss-Hermite quadrature rules,
//! per-group adaptive Gauss-Hermite log-likelihood and posterior
//! moments (random-effect dimension 1 or 2), the Laplace approximation
//! (baseline method and source of starting predictions), and the
//! closed-form Gaussian integrals of a probit factor.

use crate::data::Group;
use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::special::{log_phi_cdf, std_normal_cdf, std_normal_pdf, zeta1, zeta2};

/// Gauss-Hermite rule in the physicists' convention: exact for
/// polynomials of degree `2·order − 1` against the weight `e^{−x²}`.
#[derive(Debug, Clone)]
pub struct GHRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub-Welsch construction: eigenvalues of the Hermite Jacobi matrix
/// give the nodes and the squared first eigenvector components give the
/// weights (scaled by √π). Weights sum to √π; nodes are symmetric
/// about zero by construction.
pub fn gh_rule(order: usize) -> GHRule {
    assert!(order >= 1, "quadrature order must be at least 1");
    let n = order;
    // Jacobi matrix: zero diagonal, sub-diagonal √(k/2)
    let mut diag = vec![0.0f64; n];
    let mut off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    off.push(0.0);
    let mut first_row = vec![0.0f64; n];
    first_row[0] = 1.0;
    tridiag_ql_first_row(&mut diag, &mut off, &mut first_row)
        .expect("Hermite Jacobi matrix cannot defeat the QL iteration");

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| diag[a].partial_cmp(&diag[b]).unwrap());
    let mut nodes: Vec<f64> = idx.iter().map(|&i| diag[i]).collect();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut weights: Vec<f64> = idx
        .iter()
        .map(|&i| sqrt_pi * first_row[i] * first_row[i])
        .collect();

    // enforce the exact ± symmetry of the rule
    for i in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GHRule {
        order,
        nodes,
        weights,
    }
}

/// Implicit-shift QL iteration for a symmetric tridiagonal matrix,
/// accumulating only the first row of the eigenvector matrix (all a
/// Gaussian quadrature rule needs). `diag` holds the eigenvalues on
/// return, unsorted.
fn tridiag_ql_first_row(diag: &mut [f64], off: &mut [f64], first_row: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(
                    "tridiagonal QL exceeded its iteration budget".into(),
                ));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let mut s = 1.0f64;
            let mut c = 1.0f64;
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                f = first_row[i + 1];
                first_row[i + 1] = s * first_row[i] + c * f;
                first_row[i] = c * first_row[i] - s * f;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}

/// Laplace fit of one group's integrand: interior mode of the
/// log-integrand, its negative Hessian, and the resulting approximate
/// log-likelihood contribution.
#[derive(Debug, Clone)]
pub struct LaplaceGroupFit {
    pub mode: Vec<f64>,
    pub neg_hess: SymMat,
    pub loglik_contrib: f64,
    pub converged: bool,
}

/// Newton maximization of
/// `g(u) = Σ_j log Φ(a_ij(u)) − ½ uᵀΣ⁻¹u` with step halving; since
/// ζ″ < 0 the objective is strictly concave and the mode is unique.
/// Contribution: `g(û) − ½log|Σ| − ½log|−∇²g(û)|`.
///
/// Non-convergence after 50 Newton steps falls back to `u = 0` with the
/// `converged` flag cleared.
pub fn laplace_group(group: &Group, beta: &[f64], sigma: &SymMat) -> Result<LaplaceGroupFit> {
    let d = sigma.dim();
    let chol_sigma = sigma
        .cholesky()
        .map_err(|_| Error::NotPositiveDefinite("random-effect covariance must be SPD".into()))?;
    let sigma_inv = chol_sigma.inverse();

    // lin_j = βᵀx_F, sgn_j = 2y−1
    let lin: Vec<f64> = group
        .obs
        .iter()
        .map(|o| beta.iter().zip(&o.x_f).map(|(a, b)| a * b).sum())
        .collect();
    let sgn: Vec<f64> = group.obs.iter().map(|o| 2.0 * f64::from(o.y) - 1.0).collect();

    let objective = |u: &[f64]| -> f64 {
        let mut val = -0.5 * sigma_inv.quad_form(u);
        for (j, o) in group.obs.iter().enumerate() {
            let t: f64 = o.x_r.iter().zip(u).map(|(a, b)| a * b).sum();
            val += log_phi_cdf(sgn[j] * (lin[j] + t));
        }
        val
    };

    let grad_at = |u: &[f64], grad: &mut Vec<f64>, neg_hess: &mut SymMat| {
        *grad = sigma_inv.matvec(u);
        grad.iter_mut().for_each(|v| *v = -*v);
        neg_hess.copy_scaled_from(&sigma_inv, 1.0);
        for (j, o) in group.obs.iter().enumerate() {
            let t: f64 = o.x_r.iter().zip(u).map(|(a, b)| a * b).sum();
            let a = sgn[j] * (lin[j] + t);
            let z1 = zeta1(a);
            for i in 0..d {
                grad[i] += z1 * sgn[j] * o.x_r[i];
            }
            neg_hess.rank1_update(&o.x_r, -zeta2(a));
        }
    };

    let mut u = vec![0.0; d];
    let mut converged = false;
    let mut grad = vec![0.0; d];
    let mut neg_hess = SymMat::zeros(d);
    for _ in 0..50 {
        grad_at(&u, &mut grad, &mut neg_hess);
        let gnorm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // scale-aware: the score's natural size grows with the curvature
        let curv_scale = 1.0 + neg_hess.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
        if gnorm < 1e-11 * curv_scale {
            converged = true;
            break;
        }
        let chol_h = neg_hess.cholesky().map_err(|_| {
            Error::NotPositiveDefinite("Laplace curvature lost definiteness".into())
        })?;
        let delta = chol_h.solve(&grad);
        let dnorm = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let unorm = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dnorm < 1e-9 * (1.0 + unorm) {
            // quadratic-convergence endgame: objective comparisons are
            // rounding-limited, the full step is the right move
            for (ui, di) in u.iter_mut().zip(&delta) {
                *ui += di;
            }
            converged = true;
            break;
        }
        // step halving on non-increase
        let f0 = objective(&u);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
            if objective(&cand) >= f0 {
                u = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = gnorm < 1e-6 * curv_scale;
            break;
        }
    }
    if !converged {
        // a genuine Newton failure: fall back to the prior mode
        u = vec![0.0; d];
    }

    // final curvature at the mode
    neg_hess.copy_scaled_from(&sigma_inv, 1.0);
    for (j, o) in group.obs.iter().enumerate() {
        let t: f64 = o.x_r.iter().zip(&u).map(|(a, b)| a * b).sum();
        let a = sgn[j] * (lin[j] + t);
        neg_hess.rank1_update(&o.x_r, -zeta2(a));
    }
    let chol_h = neg_hess
        .cholesky()
        .map_err(|_| Error::NotPositiveDefinite("Laplace curvature lost definiteness".into()))?;
    let loglik_contrib = objective(&u) - 0.5 * chol_sigma.logdet() - 0.5 * chol_h.logdet();
    Ok(LaplaceGroupFit {
        mode: u,
        neg_hess,
        loglik_contrib,
        converged,
    })
}

/// Rule cache: the driver evaluates the same orders thousands of times
/// across objective evaluations, and the construction is cubic in the
/// order.
fn gh_rule_cached(order: usize) -> std::sync::Arc<GHRule> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GHRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("rule cache poisoned");
    map.entry(order)
        .or_insert_with(|| Arc::new(gh_rule(order)))
        .clone()
}

/// Quadrature grid recentered at the Laplace mode and rescaled by the
/// inverse square root of the curvature.
struct AdaptiveGrid {
    /// Evaluation points (row-major, one point per row).
    points: Vec<Vec<f64>>,
    /// `log w_k + |x_k|²` for each tensor point.
    log_weights: Vec<f64>,
    /// `(d/2)·log 2 + log|L|`.
    log_jacobian: f64,
}

fn adaptive_grid(mode: &[f64], neg_hess: &SymMat, rule: &GHRule) -> Result<AdaptiveGrid> {
    let d = mode.len();
    let spec = neg_hess.spectral()?;
    if spec.values.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite(
            "adaptive rescaling needs positive curvature".into(),
        ));
    }
    // L = G^{-1/2}, symmetric
    let l = spec.apply(|v| 1.0 / v.sqrt());
    let log_det_l: f64 = -0.5 * spec.values.iter().map(|v| v.ln()).sum::<f64>();
    let log_jacobian = 0.5 * d as f64 * std::f64::consts::LN_2 + log_det_l;
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut points = Vec::new();
    let mut log_weights = Vec::new();
    match d {
        1 => {
            for (i, &x) in rule.nodes.iter().enumerate() {
                points.push(vec![mode[0] + sqrt2 * l.get(0, 0) * x]);
                log_weights.push(rule.weights[i].ln() + x * x);
            }
        }
        2 => {
            for (i, &xi) in rule.nodes.iter().enumerate() {
                for (j, &xj) in rule.nodes.iter().enumerate() {
                    let p = vec![
                        mode[0] + sqrt2 * (l.get(0, 0) * xi + l.get(0, 1) * xj),
                        mode[1] + sqrt2 * (l.get(1, 0) * xi + l.get(1, 1) * xj),
                    ];
                    points.push(p);
                    log_weights
                        .push(rule.weights[i].ln() + rule.weights[j].ln() + xi * xi + xj * xj);
                }
            }
        }
        other => return Err(Error::OracleDimension(other)),
    }
    Ok(AdaptiveGrid {
        points,
        log_weights,
        log_jacobian,
    })
}

/// Log of the full integrand of one group's likelihood integral,
/// including the prior normalizer.
fn log_integrand(group: &Group, beta: &[f64], sigma_inv: &SymMat, log_det_sigma: f64, u: &[f64]) -> f64 {
    let d = u.len() as f64;
    let mut val = -0.5 * sigma_inv.quad_form(u)
        - 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det_sigma);
    for o in &group.obs {
        let sgn = 2.0 * f64::from(o.y) - 1.0;
        let lin: f64 = beta.iter().zip(&o.x_f).map(|(a, b)| a * b).sum();
        let t: f64 = o.x_r.iter().zip(u).map(|(a, b)| a * b).sum();
        val += log_phi_cdf(sgn * (lin + t));
    }
    val
}

/// Exact (to quadrature accuracy) per-group log-likelihood by adaptive
/// Gauss-Hermite quadrature. Random-effect dimension 1 or 2 only.
pub fn aghq_group_loglik(group: &Group, beta: &[f64], sigma: &SymMat, order: usize) -> Result<f64> {
    let d = sigma.dim();
    if d > 2 {
        return Err(Error::OracleDimension(d));
    }
    let lap = laplace_group(group, beta, sigma)?;
    let rule = gh_rule_cached(order);
    let grid = adaptive_grid(&lap.mode, &lap.neg_hess, &rule)?;
    let chol = sigma.cholesky()?;
    let sigma_inv = chol.inverse();
    let log_det_sigma = chol.logdet();

    let mut terms: Vec<f64> = Vec::with_capacity(grid.points.len());
    for (p, lw) in grid.points.iter().zip(&grid.log_weights) {
        terms.push(lw + log_integrand(group, beta, &sigma_inv, log_det_sigma, p));
    }
    Ok(grid.log_jacobian + log_sum_exp(&terms))
}

/// Posterior mean and covariance of the group's random effect by the
/// same adaptive grid (the ratio-of-integrals best predictor).
pub fn aghq_posterior_moments(
    group: &Group,
    beta: &[f64],
    sigma: &SymMat,
    order: usize,
) -> Result<(Vec<f64>, SymMat)> {
    let d = sigma.dim();
    if d > 2 {
        return Err(Error::OracleDimension(d));
    }
    let lap = laplace_group(group, beta, sigma)?;
    let rule = gh_rule_cached(order);
    let grid = adaptive_grid(&lap.mode, &lap.neg_hess, &rule)?;
    let chol = sigma.cholesky()?;
    let sigma_inv = chol.inverse();
    let log_det_sigma = chol.logdet();

    let logp: Vec<f64> = grid
        .points
        .iter()
        .zip(&grid.log_weights)
        .map(|(p, lw)| lw + log_integrand(group, beta, &sigma_inv, log_det_sigma, p))
        .collect();
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();

    let mut mean = vec![0.0; d];
    for (p, wk) in grid.points.iter().zip(&w) {
        for i in 0..d {
            mean[i] += wk * p[i];
        }
    }
    mean.iter_mut().for_each(|v| *v /= total);

    let mut cov = SymMat::zeros(d);
    for (p, wk) in grid.points.iter().zip(&w) {
        for i in 0..d {
            for j in 0..=i {
                let v = cov.get(i, j) + wk * (p[i] - mean[i]) * (p[j] - mean[j]);
                cov.set(i, j, v);
            }
        }
    }
    cov.scale(1.0 / total);
    Ok((mean, cov))
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// The three closed-form Gaussian integrals of a probit factor:
/// zeroth, first and second moments of `Φ(a + bᵀx)` against the
/// standard `d`-variate Gaussian.
pub fn lemma2_closed_forms(a: f64, b: &[f64]) -> (f64, Vec<f64>, SymMat) {
    let d = b.len();
    let s2: f64 = b.iter().map(|v| v * v).sum::<f64>() + 1.0;
    let s = s2.sqrt();
    let zeroth = std_normal_cdf(a / s);
    let dens = std_normal_pdf(a / s);
    let first: Vec<f64> = b.iter().map(|&v| v * dens / s).collect();
    let mut second = SymMat::scaled_identity(d, zeroth);
    second.rank1_update(b, -a * dens / (s2 * s));
    (zeroth, first, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use std::f64::consts::PI;

    fn group_from(y: &[u8], xs: &[f64]) -> Group {
        Group {
            label: "g".into(),
            obs: y
                .iter()
                .zip(xs)
                .map(|(&y, &x)| Observation {
                    y,
                    x_f: vec![1.0, x],
                    x_r: vec![1.0],
                })
                .collect(),
        }
    }

    #[test]
    fn gh_rule_low_orders_closed_form() {
        let r1 = gh_rule(1);
        assert!(r1.nodes[0].abs() < 1e-15);
        assert!((r1.weights[0] - PI.sqrt()).abs() < 1e-14);

        let r2 = gh_rule(2);
        let want = 0.5f64.sqrt();
        assert!((r2.nodes[0] + want).abs() < 1e-14);
        assert!((r2.nodes[1] - want).abs() < 1e-14);
        assert!((r2.weights[0] - PI.sqrt() / 2.0).abs() < 1e-14);
        assert!((r2.weights[1] - PI.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn gh_rule_moment_identities() {
        // ∫x⁴e^{−x²}dx = 3√π/4 exactly from order 3 up
        for order in [3usize, 5, 20, 100] {
            let r = gh_rule(order);
            let m4: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(x, w)| w * x.powi(4))
                .sum();
            assert!(
                (m4 - 3.0 * PI.sqrt() / 4.0).abs() < 1e-13,
                "order {order}: {m4}"
            );
            let total: f64 = r.weights.iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-12, "order {order}");
            for (i, x) in r.nodes.iter().enumerate() {
                assert!((x + r.nodes[r.order - 1 - i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplace_mode_scalar_fixed_point() {
        // β = 0, y = 1, unit design and variance: the mode solves ζ′(u) = u
        let g = group_from(&[1], &[0.0]);
        let mut g = g;
        g.obs[0].x_f = vec![0.0];
        let sigma = SymMat::from_vech(vec![1.0]).unwrap();
        let fit = laplace_group(&g, &[0.0], &sigma).unwrap();
        assert!(fit.converged);
        let u = fit.mode[0];
        assert!((zeta1(u) - u).abs() < 1e-9);
        assert!((u - 0.5061).abs() < 1e-4);
    }

    #[test]
    fn laplace_empty_group_is_prior_only() {
        let g = Group {
            label: "e".into(),
            obs: vec![],
        };
        let sigma = SymMat::from_vech(vec![2.0]).unwrap();
        let fit = laplace_group(&g, &[0.0], &sigma).unwrap();
        assert!(fit.mode[0].abs() < 1e-14);
        assert!(fit.loglik_contrib.abs() < 1e-12);
    }

    #[test]
    fn aghq_matches_closed_form_single_site() {
        // n_i = 1: the likelihood integral is Φ(a/√(bᵀΣb+1)) exactly
        let g = group_from(&[1], &[0.5]);
        let sigma = SymMat::from_vech(vec![1.44]).unwrap();
        let beta = [0.3, 0.9];
        let ll = aghq_group_loglik(&g, &beta, &sigma, 100).unwrap();
        let a = 0.3 + 0.9 * 0.5;
        let want = std_normal_cdf(a / (1.44f64 + 1.0).sqrt()).ln();
        assert!((ll - want).abs() < 1e-10, "{ll} vs {want}");
    }

    #[test]
    fn aghq_self_convergence_in_order() {
        let g = group_from(&[1, 0], &[0.2, 0.8]);
        let sigma = SymMat::from_vech(vec![1.0]).unwrap();
        let beta = [0.0, 1.0];
        let a = aghq_group_loglik(&g, &beta, &sigma, 100).unwrap();
        let b = aghq_group_loglik(&g, &beta, &sigma, 200).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn aghq_posterior_symmetric_configuration() {
        // y-pattern and design symmetric under sign flip: posterior mean 0
        let g = Group {
            label: "s".into(),
            obs: vec![
                Observation {
                    y: 1,
                    x_f: vec![0.0],
                    x_r: vec![1.0],
                },
                Observation {
                    y: 0,
                    x_f: vec![0.0],
                    x_r: vec![1.0],
                },
            ],
        };
        let sigma = SymMat::from_vech(vec![1.0]).unwrap();
        let (mean, cov) = aghq_posterior_moments(&g, &[0.0], &sigma, 100).unwrap();
        assert!(mean[0].abs() < 1e-12);
        assert!(cov.get(0, 0) > 0.0);
    }

    #[test]
    fn oracle_dimension_capped() {
        let g = Group {
            label: "g".into(),
            obs: vec![Observation {
                y: 1,
                x_f: vec![1.0],
                x_r: vec![1.0, 0.0, 0.0],
            }],
        };
        let sigma = SymMat::identity(3);
        assert!(matches!(
            aghq_group_loglik(&g, &[0.0], &sigma, 10),
            Err(Error::OracleDimension(3))
        ));
    }

    #[test]
    fn lemma2_anchors_and_quadrature() {
        let (z, _, _) = lemma2_closed_forms(0.0, &[0.7, -0.3]);
        assert!((z - 0.5).abs() < 1e-15);
        let (z, _, _) = lemma2_closed_forms(1.0, &[1.0]);
        assert!((z - std_normal_cdf(1.0 / 2.0f64.sqrt())).abs() < 1e-15);

        // against direct 1-d tensor GH quadrature, several (a, b)
        let rule = gh_rule(80);
        for (a, b) in [(0.4, vec![0.9]), (-1.2, vec![0.5]), (0.0, vec![2.0])] {
            let (z0, z1, z2) = lemma2_closed_forms(a, &b);
            let sqrt2 = 2.0f64.sqrt();
            let mut m0 = 0.0;
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let u = sqrt2 * x;
                let f = std_normal_cdf(a + b[0] * u) / PI.sqrt();
                m0 += w * f;
                m1 += w * f * u;
                m2 += w * f * u * u;
            }
            assert!((m0 - z0).abs() < 1e-9);
            assert!((m1 - z1[0]).abs() < 1e-9);
            assert!((m2 - z2.get(0, 0)).abs() < 1e-9);
        }
    }
}
