//! Outer maximum-likelihood driver: a Nelder-Mead warm start and BFGS
//! in the matrix-log parametrization `(β, θ)`, followed by BFGS and a
//! finite-difference Hessian in the interpretable parametrization
//! `(β, ω)`, confidence intervals by normal inversion, and per-group
//! best predictions at the fitted parameters.

use crate::data::GroupedDataset;
use crate::ep::{
    ep_best_predict, ep_group_loglik, ep_group_loop, ep_start_site, EpGroupState, EpOptions,
    SweepMode,
};
use crate::error::{Error, Result};
use crate::linalg::{vech_len, SymMat};
use crate::oracles::{aghq_group_loglik, aghq_posterior_moments, laplace_group};
use crate::optim::{bfgs, central_hessian, nelder_mead, newton_refine, BfgsOpts, NelderMeadOpts};
use crate::params::{omega_to_sigma, theta_to_omega, theta_to_sigma};
use crate::special::{std_normal_quantile, zeta1};
use rayon::prelude::*;

/// Which per-group log-likelihood the outer optimizer maximizes.
/// `Ep` is the production method; the other two are the comparison
/// baselines used by the coverage harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Ep,
    Laplace,
    Aghq { order: usize },
}

impl FitMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FitMethod::Ep => "ep",
            FitMethod::Laplace => "laplace",
            FitMethod::Aghq { .. } => "aghq",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub method: FitMethod,
    pub alpha: f64,
    pub ep_tol: f64,
    pub ep_max_iter: usize,
    pub sweep: SweepMode,
    /// Nelder-Mead budget per parameter.
    pub nm_budget_per_param: usize,
    pub bfgs: BfgsOpts,
    /// EP fixed-point tolerance while differencing the Hessian; the
    /// objective's own noise must sit below the differencing scale.
    pub hessian_ep_tol: f64,
    /// Relative step for the second-difference Hessian.
    pub hessian_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: FitMethod::Ep,
            alpha: 0.05,
            ep_tol: 1e-5,
            ep_max_iter: 100,
            sweep: SweepMode::FreshCavity,
            nm_budget_per_param: 200,
            bfgs: BfgsOpts::default(),
            hessian_ep_tol: 1e-8,
            hessian_step: 1e-2,
        }
    }
}

/// One confidence-interval row on the interpretable scale. Bounds are
/// absent when the Hessian could not be inverted. The `raw_*` fields
/// hold the untransformed `(β, ω)`-scale endpoints; the interpretable
/// bounds are their exact monotone images.
#[derive(Debug, Clone)]
pub struct CiRow {
    pub name: String,
    pub lower: Option<f64>,
    pub estimate: f64,
    pub upper: Option<f64>,
    pub raw_lower: Option<f64>,
    pub raw_upper: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CiTable {
    pub rows: Vec<CiRow>,
    pub reliable: bool,
}

#[derive(Debug, Clone)]
pub struct GroupPrediction {
    pub label: String,
    pub u: Vec<f64>,
    pub cov: SymMat,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub nm_evals: usize,
    pub stage1_iterations: usize,
    pub stage1_converged: bool,
    pub stage2_iterations: usize,
    pub stage2_converged: bool,
    pub objective_evals: usize,
    pub grad_max_norm: f64,
    pub ep_nonconverged_groups: usize,
    pub ci_reliable: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    pub sigma_hat: SymMat,
    pub theta_hat: Vec<f64>,
    pub omega_hat: Vec<f64>,
    /// Hessian of the approximate log-likelihood in `(β, ω)` at the
    /// optimum (negative definite when all is well).
    pub hessian_omega: SymMat,
    pub ci: CiTable,
    pub loglik: f64,
    pub predictions: Vec<GroupPrediction>,
    pub diagnostics: Diagnostics,
}

/// Objective evaluator: the summed per-group log-likelihood under the
/// configured method, with the Laplace starting-prediction cache for
/// the EP path. Any group failure maps the whole evaluation to −∞ so
/// the optimizers reject the step.
pub struct Evaluator<'a> {
    data: &'a GroupedDataset,
    method: FitMethod,
    ep_tol: f64,
    ep_max_iter: usize,
    sweep: SweepMode,
    cache_key: Option<Vec<f64>>,
    u_hats: Vec<Vec<f64>>,
    pub evals: usize,
}

/// Max-norm movement in `(β, vech Σ)` that triggers a refresh of the
/// cached Laplace predictions.
const CACHE_REFRESH_NORM: f64 = 1e-2;

impl<'a> Evaluator<'a> {
    pub fn new(data: &'a GroupedDataset, config: &FitConfig) -> Self {
        Evaluator {
            data,
            method: config.method,
            ep_tol: config.ep_tol,
            ep_max_iter: config.ep_max_iter,
            sweep: config.sweep,
            cache_key: None,
            u_hats: vec![vec![0.0; data.d_r]; data.groups.len()],
            evals: 0,
        }
    }

    pub fn set_ep_tol(&mut self, tol: f64) {
        self.ep_tol = tol;
    }

    fn refresh_predictions(&mut self, beta: &[f64], sigma: &SymMat) {
        let mut key = beta.to_vec();
        key.extend_from_slice(sigma.vech());
        let moved = match &self.cache_key {
            None => true,
            Some(old) => old
                .iter()
                .zip(&key)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                > CACHE_REFRESH_NORM,
        };
        if moved {
            let d_r = self.data.d_r;
            self.u_hats = self
                .data
                .groups
                .par_iter()
                .map(|g| {
                    laplace_group(g, beta, sigma)
                        .map(|f| f.mode)
                        .unwrap_or_else(|_| vec![0.0; d_r])
                })
                .collect();
            self.cache_key = Some(key);
        }
    }

    /// Summed log-likelihood at `(β, Σ)`; −∞ when any group fails.
    pub fn loglik(&mut self, beta: &[f64], sigma: &SymMat) -> f64 {
        self.evals += 1;
        match self.method {
            FitMethod::Ep => {
                self.refresh_predictions(beta, sigma);
                let opts = EpOptions {
                    tol: self.ep_tol,
                    max_iter: self.ep_max_iter,
                    sweep: self.sweep,
                };
                let terms: Vec<Result<f64>> = self
                    .data
                    .groups
                    .par_iter()
                    .zip(&self.u_hats)
                    .map(|(g, u_hat)| {
                        let starts: Vec<_> = g
                            .obs
                            .iter()
                            .map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, beta, u_hat))
                            .collect();
                        let state = ep_group_loop(g, beta, sigma, &starts, &opts)?;
                        ep_group_loglik(&state)
                    })
                    .collect();
                sum_or_neg_inf(terms)
            }
            FitMethod::Laplace => {
                let terms: Vec<Result<f64>> = self
                    .data
                    .groups
                    .par_iter()
                    .map(|g| laplace_group(g, beta, sigma).map(|f| f.loglik_contrib))
                    .collect();
                sum_or_neg_inf(terms)
            }
            FitMethod::Aghq { order } => {
                let terms: Vec<Result<f64>> = self
                    .data
                    .groups
                    .par_iter()
                    .map(|g| aghq_group_loglik(g, beta, sigma, order))
                    .collect();
                sum_or_neg_inf(terms)
            }
        }
    }

    /// Negative log-likelihood over the stacked `(β, θ)` vector.
    pub fn neg_loglik_theta(&mut self, x: &[f64]) -> f64 {
        let d_f = self.data.d_f;
        let sigma = match theta_to_sigma(&x[d_f..]) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        -self.loglik(&x[..d_f], &sigma)
    }

    /// Negative log-likelihood over the stacked `(β, ω)` vector.
    pub fn neg_loglik_omega(&mut self, x: &[f64]) -> f64 {
        let d_f = self.data.d_f;
        let sigma = match omega_to_sigma(&x[d_f..]) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        -self.loglik(&x[..d_f], &sigma)
    }
}

fn sum_or_neg_inf(terms: Vec<Result<f64>>) -> f64 {
    let mut total = 0.0;
    for t in terms {
        match t {
            Ok(v) if v.is_finite() => total += v,
            _ => return f64::NEG_INFINITY,
        }
    }
    total
}

/// Pooled probit fit ignoring the random effects, by iteratively
/// reweighted least squares; supplies the outer optimizer's starting β.
pub fn irls_probit(data: &GroupedDataset) -> Result<Vec<f64>> {
    let p = data.d_f;
    let mut beta = vec![0.0; p];
    for _ in 0..30 {
        let mut xtwx = SymMat::zeros(p);
        let mut xtwz = vec![0.0; p];
        for g in &data.groups {
            for o in &g.obs {
                let eta: f64 = beta.iter().zip(&o.x_f).map(|(a, b)| a * b).sum();
                let eta = eta.clamp(-35.0, 35.0);
                let s = 2.0 * f64::from(o.y) - 1.0;
                // working response and weight via the stable Mills forms
                let z = eta + s / zeta1(-s * eta);
                let w = zeta1(eta) * zeta1(-eta);
                xtwx.rank1_update(&o.x_f, w);
                for k in 0..p {
                    xtwz[k] += w * z * o.x_f[k];
                }
            }
        }
        let ridge = 1e-10 * (1.0 + xtwx.diagonal().iter().sum::<f64>() / p as f64);
        for k in 0..p {
            xtwx.set(k, k, xtwx.get(k, k) + ridge);
        }
        let chol = xtwx.cholesky().map_err(|_| {
            Error::InvalidArgument("singular design in the probit warm start".into())
        })?;
        let new_beta = chol.solve(&xtwz);
        let delta = new_beta
            .iter()
            .zip(&beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = new_beta;
        if delta < 1e-8 {
            break;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "probit warm start produced non-finite coefficients".into(),
        ));
    }
    Ok(beta)
}

/// Confidence intervals on the interpretable scale from the Hessian of
/// the log-likelihood in `(β, ω)`:
/// `estimate ± Φ⁻¹(1−α/2)·√(−diag(H⁻¹))` in `(β, ω)` space, with the
/// σ rows exponentiated and the ρ rows mapped through tanh.
pub fn confidence_intervals(
    hessian_omega: &SymMat,
    estimates: &[f64],
    alpha: f64,
    d_f: usize,
    d_r: usize,
) -> Result<CiTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let p = d_f + vech_len(d_r);
    if hessian_omega.dim() != p || estimates.len() != p {
        return Err(Error::Dimension(
            "hessian/estimate dimensions do not match the model".into(),
        ));
    }
    let z = std_normal_quantile(1.0 - 0.5 * alpha)?;
    let mut neg = hessian_omega.clone();
    neg.scale(-1.0);
    let half_widths: Option<Vec<f64>> = match neg.cholesky() {
        Ok(chol) => {
            let cov = chol.inverse();
            Some((0..p).map(|k| z * cov.get(k, k).sqrt()).collect())
        }
        Err(_) => None,
    };
    let reliable = half_widths.is_some();

    let mut rows = Vec::with_capacity(p);
    let mut names: Vec<String> = (0..d_f).map(|k| format!("beta{k}")).collect();
    for k in 1..=d_r {
        names.push(format!("sigma{k}"));
    }
    for j in 0..d_r {
        for i in (j + 1)..d_r {
            names.push(format!("rho{}{}", i + 1, j + 1));
        }
    }
    for (k, name) in names.into_iter().enumerate() {
        let raw = estimates[k];
        let (lo_raw, hi_raw) = match &half_widths {
            Some(h) => (Some(raw - h[k]), Some(raw + h[k])),
            None => (None, None),
        };
        // monotone back-transforms; the endpoints are exact images
        let transform: fn(f64) -> f64 = if k < d_f {
            |v| v
        } else if k < d_f + d_r {
            f64::exp
        } else {
            f64::tanh
        };
        rows.push(CiRow {
            name,
            lower: lo_raw.map(transform),
            estimate: transform(raw),
            upper: hi_raw.map(transform),
            raw_lower: lo_raw,
            raw_upper: hi_raw,
        });
    }
    Ok(CiTable { rows, reliable })
}

/// Per-group best predictions at fixed parameters under the configured
/// method. Returns the prediction list and, for EP, the number of
/// groups whose inner loop did not converge.
pub fn predict_groups(
    data: &GroupedDataset,
    beta: &[f64],
    sigma: &SymMat,
    config: &FitConfig,
) -> Result<(Vec<GroupPrediction>, usize)> {
    match config.method {
        FitMethod::Ep => {
            let opts = EpOptions {
                tol: config.ep_tol,
                max_iter: config.ep_max_iter,
                sweep: config.sweep,
            };
            let states: Vec<Result<(EpGroupState, String)>> = data
                .groups
                .par_iter()
                .map(|g| {
                    let u_hat = laplace_group(g, beta, sigma)
                        .map(|f| f.mode)
                        .unwrap_or_else(|_| vec![0.0; sigma.dim()]);
                    let starts: Vec<_> = g
                        .obs
                        .iter()
                        .map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, beta, &u_hat))
                        .collect();
                    ep_group_loop(g, beta, sigma, &starts, &opts).map(|s| (s, g.label.clone()))
                })
                .collect();
            let mut out = Vec::with_capacity(data.groups.len());
            let mut nonconverged = 0;
            for st in states {
                let (state, label) = st?;
                if !state.converged {
                    nonconverged += 1;
                }
                let (u, cov) = ep_best_predict(&state)?;
                out.push(GroupPrediction { label, u, cov });
            }
            Ok((out, nonconverged))
        }
        FitMethod::Laplace => {
            let preds: Vec<Result<GroupPrediction>> = data
                .groups
                .par_iter()
                .map(|g| {
                    let fit = laplace_group(g, beta, sigma)?;
                    let cov = fit.neg_hess.cholesky()?.inverse();
                    Ok(GroupPrediction {
                        label: g.label.clone(),
                        u: fit.mode,
                        cov,
                    })
                })
                .collect();
            Ok((preds.into_iter().collect::<Result<Vec<_>>>()?, 0))
        }
        FitMethod::Aghq { order } => {
            let preds: Vec<Result<GroupPrediction>> = data
                .groups
                .par_iter()
                .map(|g| {
                    let (u, cov) = aghq_posterior_moments(g, beta, sigma, order)?;
                    Ok(GroupPrediction {
                        label: g.label.clone(),
                        u,
                        cov,
                    })
                })
                .collect();
            Ok((preds.into_iter().collect::<Result<Vec<_>>>()?, 0))
        }
    }
}

/// Two-stage fit: Nelder-Mead then BFGS over `(β, θ)`, re-posed BFGS
/// over `(β, ω)`, Hessian at the optimum, confidence intervals, and
/// best predictions.
pub fn optimize(data: &GroupedDataset, config: &FitConfig) -> Result<FitResult> {
    data.validate()?;
    let d_f = data.d_f;
    let d_r = data.d_r;
    if let FitMethod::Aghq { .. } = config.method {
        if d_r > 2 {
            return Err(Error::OracleDimension(d_r));
        }
    }

    let beta0 = irls_probit(data)?;
    let mut x0 = beta0;
    x0.extend(std::iter::repeat(0.0).take(vech_len(d_r)));
    let p = x0.len();

    let mut ev = Evaluator::new(data, config);

    // Stage 1: (β, θ), Nelder-Mead warm start then BFGS
    let nm_opts = NelderMeadOpts {
        max_evals: config.nm_budget_per_param * p,
        ..NelderMeadOpts::default()
    };
    let nm = nelder_mead(&mut |x| ev.neg_loglik_theta(x), &x0, &nm_opts);
    let stage1 = bfgs(&mut |x| ev.neg_loglik_theta(x), &nm.x, &config.bfgs);
    if !stage1.fx.is_finite() {
        return Err(Error::NoConvergence(
            "stage-1 optimization never found a feasible point".into(),
        ));
    }

    // Stage 2: re-pose in (β, ω) from the stage-1 optimum
    let theta1 = stage1.x[d_f..].to_vec();
    let omega1 = theta_to_omega(&theta1)?;
    let mut x2 = stage1.x[..d_f].to_vec();
    x2.extend_from_slice(&omega1);
    let stage2 = bfgs(&mut |x| ev.neg_loglik_omega(x), &x2, &config.bfgs);

    // Hessian of ℓ̃ in (β, ω): EP tolerance tightened so fixed-point
    // truncation sits below the differencing scale
    ev.set_ep_tol(config.hessian_ep_tol);
    let mut neg_hess = central_hessian(
        &mut |x| ev.neg_loglik_omega(x),
        &stage2.x,
        config.hessian_step,
    );

    // Newton polish with the Hessian in hand: a quasi-Newton line
    // search stops resolving descent well before the gradient is small,
    // a couple of damped Newton steps close the remaining gap
    ev.set_ep_tol(config.hessian_ep_tol.min(1e-10));
    let polish = newton_refine(
        &mut |x| ev.neg_loglik_omega(x),
        &stage2.x,
        &neg_hess,
        config.bfgs.grad_tol,
        20,
    );
    let loglik = -ev.neg_loglik_omega(&polish.x);
    let moved = polish
        .x
        .iter()
        .zip(&stage2.x)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if moved > 1e-3 {
        ev.set_ep_tol(config.hessian_ep_tol);
        neg_hess = central_hessian(
            &mut |x| ev.neg_loglik_omega(x),
            &polish.x,
            config.hessian_step,
        );
    }
    ev.set_ep_tol(config.ep_tol);

    let beta_hat = polish.x[..d_f].to_vec();
    let omega_hat = polish.x[d_f..].to_vec();
    let sigma_hat = omega_to_sigma(&omega_hat)?;
    let theta_hat = crate::params::sigma_to_theta(&sigma_hat)?;

    let mut hessian_omega = neg_hess;
    hessian_omega.scale(-1.0);

    let ci = confidence_intervals(&hessian_omega, &polish.x, config.alpha, d_f, d_r)?;
    let (predictions, ep_nonconverged_groups) =
        predict_groups(data, &beta_hat, &sigma_hat, config)?;

    let grad_max_norm = polish.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let reliable = ci.reliable;
    Ok(FitResult {
        beta_hat,
        sigma_hat,
        theta_hat,
        omega_hat,
        hessian_omega,
        ci,
        loglik,
        predictions,
        diagnostics: Diagnostics {
            nm_evals: nm.evals,
            stage1_iterations: stage1.iterations,
            stage1_converged: stage1.converged,
            stage2_iterations: stage2.iterations + polish.iterations,
            stage2_converged: stage2.converged || polish.converged,
            objective_evals: ev.evals,
            grad_max_norm,
            ep_nonconverged_groups,
            ci_reliable: reliable,
        },
    })
}
