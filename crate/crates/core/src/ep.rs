//! Per-group expectation propagation: the message-passing fixed point
//! over one group's likelihood factors, the resulting log-likelihood
//! contribution, and best prediction of the group's random effect.
//!
//! Each site message approximates one Bernoulli factor by an
//! unnormalized Gaussian in the random effect. A sweep updates every
//! site from its cavity (prior message plus all other sites) through
//! the closed-form probit projection; the constant coefficients are
//! filled in once after the `(η1, η2)` fixed point is reached, exactly
//! as the update order requires (they do not feed back into the loop).

use crate::data::Group;
use crate::error::{Error, Result};
use crate::linalg::{vech_len, SymMat};
use crate::natparam::{
    a_n, c_probit, eta2_decode_into, eta2_encode, NaturalParams, ProjScratch, SiteContext,
};
use crate::special::{zeta1, zeta2};

/// Sweep scheduling for the site updates.
///
/// `FreshCavity` refreshes the site sum incrementally after every site
/// update, so later sites in a sweep see up-to-date cavities; it
/// converges in fewer sweeps. `Literal` recomputes the sum once per
/// sweep and updates all sites from that snapshot. Both schedules share
/// the same fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    #[default]
    FreshCavity,
    Literal,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(SweepMode::FreshCavity),
            "literal" => Ok(SweepMode::Literal),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep mode '{other}' (expected 'fresh' or 'literal')"
            ))),
        }
    }
}

/// Options for the per-group fixed-point loop.
#[derive(Debug, Clone, Copy)]
pub struct EpOptions {
    /// Convergence threshold on the per-coordinate relative change
    /// `|Δ| / (1 + |old|)`, maximized over sites and coordinates.
    pub tol: f64,
    pub max_iter: usize,
    pub sweep: SweepMode,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions {
            tol: 1e-5,
            max_iter: 100,
            sweep: SweepMode::FreshCavity,
        }
    }
}

/// Converged (or abandoned) per-group EP state.
#[derive(Debug, Clone)]
pub struct EpGroupState {
    d: usize,
    n_sites: usize,
    site_eta0: Vec<f64>,
    site_eta1: Vec<f64>, // n_sites × d
    site_eta2: Vec<f64>, // n_sites × d(d+1)/2
    prior: NaturalParams,
    sum0: f64,
    sum1: Vec<f64>,
    sum2: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Site updates skipped after the damping fallback also failed.
    pub skipped_updates: usize,
}

impl EpGroupState {
    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// The prior factor's message `η_Σ`.
    pub fn prior_message(&self) -> &NaturalParams {
        &self.prior
    }

    pub fn site_message(&self, j: usize) -> NaturalParams {
        let d = self.d;
        let k = vech_len(d);
        NaturalParams {
            eta0: self.site_eta0[j],
            eta1: self.site_eta1[j * d..(j + 1) * d].to_vec(),
            eta2: self.site_eta2[j * k..(j + 1) * k].to_vec(),
        }
    }

    /// Cached elementwise sum of the site messages.
    pub fn sum_sites(&self) -> NaturalParams {
        NaturalParams {
            eta0: self.sum0,
            eta1: self.sum1.clone(),
            eta2: self.sum2.clone(),
        }
    }

    /// `η_Σ + SUM`: the natural parameters of the approximate
    /// unnormalized posterior of the group's random effect.
    pub fn posterior(&self) -> NaturalParams {
        let mut p = self.prior.clone();
        p.eta0 += self.sum0;
        for (a, b) in p.eta1.iter_mut().zip(&self.sum1) {
            *a += b;
        }
        for (a, b) in p.eta2.iter_mut().zip(&self.sum2) {
            *a += b;
        }
        p
    }
}

/// The prior factor's natural parameters
/// `η_Σ = [−½ log|2πΣ|, 0, −½ D_dᵀ vec(Σ⁻¹)]`.
pub fn gaussian_prior(sigma: &SymMat) -> Result<NaturalParams> {
    let d = sigma.dim();
    let chol = sigma
        .cholesky()
        .map_err(|_| Error::NotPositiveDefinite("random-effect covariance must be SPD".into()))?;
    let mut m = chol.inverse();
    m.scale(-0.5);
    let eta2 = eta2_encode(&m);
    let eta0 = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + chol.logdet());
    Ok(NaturalParams {
        eta0,
        eta1: vec![0.0; d],
        eta2,
    })
}

/// Taylor-based starting value for one site message, expanded around a
/// prediction `u_hat` of the group's random effect:
/// `η1 = {(2y−1)ζ′(â) − ζ″(â)·(x_Rᵀû)}·x_R`,
/// `η2 = ½ζ″(â)·D_dᵀvec(x_R x_Rᵀ)`, with
/// `â = (2y−1)(βᵀx_F + ûᵀx_R)` and `η0 = 0`.
pub fn ep_start_site(y: u8, x_f: &[f64], x_r: &[f64], beta: &[f64], u_hat: &[f64]) -> NaturalParams {
    let d = x_r.len();
    let sgn = 2.0 * f64::from(y) - 1.0;
    let xr_dot_u: f64 = x_r.iter().zip(u_hat).map(|(a, b)| a * b).sum();
    let lin: f64 = beta.iter().zip(x_f).map(|(a, b)| a * b).sum();
    let a_hat = sgn * (lin + xr_dot_u);
    let z1 = zeta1(a_hat);
    let z2 = zeta2(a_hat);
    let coef = sgn * z1 - z2 * xr_dot_u;
    let eta1: Vec<f64> = x_r.iter().map(|&v| coef * v).collect();
    let mut eta2 = vec![0.0; vech_len(d)];
    let mut idx = 0;
    for j in 0..d {
        for i in j..d {
            let scale = if i == j { 1.0 } else { 2.0 };
            eta2[idx] = 0.5 * z2 * scale * x_r[i] * x_r[j];
            idx += 1;
        }
    }
    NaturalParams {
        eta0: 0.0,
        eta1,
        eta2,
    }
}

/// Per-site tilt constants `c0 = (2y−1)βᵀx_F`, `c1 = (2y−1)x_R`.
pub fn site_contexts(group: &Group, beta: &[f64]) -> Vec<SiteContext> {
    group
        .obs
        .iter()
        .map(|o| {
            let sgn = 2.0 * f64::from(o.y) - 1.0;
            let c0 = sgn * beta.iter().zip(&o.x_f).map(|(a, b)| a * b).sum::<f64>();
            let c1 = o.x_r.iter().map(|&v| sgn * v).collect();
            SiteContext { c0, c1 }
        })
        .collect()
}

/// Run the message-passing loop for one group until the site messages
/// converge (or the iteration budget runs out, in which case the state
/// is flagged not converged).
///
/// A site whose update produces a non-integrable intermediate is given
/// one retry at half step; if that also fails the site is skipped for
/// the sweep.
pub fn ep_group_loop(
    group: &Group,
    beta: &[f64],
    sigma: &SymMat,
    starts: &[NaturalParams],
    opts: &EpOptions,
) -> Result<EpGroupState> {
    let n = group.len();
    let d = sigma.dim();
    let k = vech_len(d);
    if n == 0 {
        return Err(Error::Dimension("group has no observations".into()));
    }
    if starts.len() != n || starts.iter().any(|s| s.dim() != d) {
        return Err(Error::Dimension(
            "starting values must match the group size and random-effect dimension".into(),
        ));
    }
    let prior = gaussian_prior(sigma)?;
    let contexts = site_contexts(group, beta);

    let mut site_eta0 = vec![0.0; n];
    let mut site_eta1 = vec![0.0; n * d];
    let mut site_eta2 = vec![0.0; n * k];
    for (j, s) in starts.iter().enumerate() {
        site_eta1[j * d..(j + 1) * d].copy_from_slice(&s.eta1);
        site_eta2[j * k..(j + 1) * k].copy_from_slice(&s.eta2);
    }
    let mut sum1 = vec![0.0; d];
    let mut sum2 = vec![0.0; k];
    recompute_sums(n, d, k, &site_eta1, &site_eta2, &mut sum1, &mut sum2);

    let mut scratch = ProjScratch::new(d);
    let mut cav1 = vec![0.0; d];
    let mut cav2 = vec![0.0; k];
    let mut new1 = vec![0.0; d];
    let mut new2 = vec![0.0; k];
    let mut old1 = vec![0.0; d];
    let mut old2 = vec![0.0; k];
    let mut cand1 = vec![0.0; d];
    let mut cand2 = vec![0.0; k];
    let mut postbuf = vec![0.0; k];
    let mut post2 = SymMat::zeros(d);
    let mut post_chol = crate::linalg::Cholesky::placeholder(d);
    // literal-mode deferred writes
    let mut pending1 = if opts.sweep == SweepMode::Literal {
        vec![0.0; n * d]
    } else {
        Vec::new()
    };
    let mut pending2 = if opts.sweep == SweepMode::Literal {
        vec![0.0; n * k]
    } else {
        Vec::new()
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut skipped_updates = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mut max_change = 0.0f64;

        match opts.sweep {
            SweepMode::FreshCavity => {
                for j in 0..n {
                    old1.copy_from_slice(&site_eta1[j * d..(j + 1) * d]);
                    old2.copy_from_slice(&site_eta2[j * k..(j + 1) * k]);
                    for i in 0..d {
                        cav1[i] = prior.eta1[i] + sum1[i] - old1[i];
                    }
                    for i in 0..k {
                        cav2[i] = prior.eta2[i] + sum2[i] - old2[i];
                    }
                    if scratch
                        .k_probit_into(&cav1, &cav2, &contexts[j], &mut new1, &mut new2)
                        .is_err()
                    {
                        skipped_updates += 1;
                        continue;
                    }
                    // full step, then one damped retry if the posterior
                    // would stop being integrable
                    let mut committed = false;
                    for damp in [1.0, 0.5] {
                        for i in 0..d {
                            cand1[i] = old1[i] + damp * (new1[i] - cav1[i] - old1[i]);
                        }
                        for i in 0..k {
                            cand2[i] = old2[i] + damp * (new2[i] - cav2[i] - old2[i]);
                        }
                        if !cand1.iter().chain(cand2.iter()).all(|v| v.is_finite()) {
                            continue;
                        }
                        // posterior η2 with the candidate in place
                        for i in 0..k {
                            postbuf[i] = prior.eta2[i] + sum2[i] - old2[i] + cand2[i];
                        }
                        eta2_decode_into(&postbuf, &mut post2);
                        post2.scale(-1.0);
                        if post_chol.refactor(&post2).is_ok() {
                            let change = commit_site(
                                &mut site_eta1[j * d..(j + 1) * d],
                                &mut site_eta2[j * k..(j + 1) * k],
                                &cand1,
                                &cand2,
                                &mut sum1,
                                &mut sum2,
                            );
                            max_change = max_change.max(change);
                            committed = true;
                            break;
                        }
                    }
                    if !committed {
                        skipped_updates += 1;
                    }
                }
            }
            SweepMode::Literal => {
                pending1.copy_from_slice(&site_eta1);
                pending2.copy_from_slice(&site_eta2);
                for j in 0..n {
                    let old1 = &site_eta1[j * d..(j + 1) * d];
                    let old2 = &site_eta2[j * k..(j + 1) * k];
                    for i in 0..d {
                        cav1[i] = prior.eta1[i] + sum1[i] - old1[i];
                    }
                    for i in 0..k {
                        cav2[i] = prior.eta2[i] + sum2[i] - old2[i];
                    }
                    if scratch
                        .k_probit_into(&cav1, &cav2, &contexts[j], &mut new1, &mut new2)
                        .is_err()
                    {
                        skipped_updates += 1;
                        continue;
                    }
                    for i in 0..d {
                        pending1[j * d + i] = new1[i] - cav1[i];
                    }
                    for i in 0..k {
                        pending2[j * k + i] = new2[i] - cav2[i];
                    }
                }
                for j in 0..n {
                    for i in 0..d {
                        let old = site_eta1[j * d + i];
                        let new = pending1[j * d + i];
                        max_change = max_change.max((new - old).abs() / (1.0 + old.abs()));
                    }
                    for i in 0..k {
                        let old = site_eta2[j * k + i];
                        let new = pending2[j * k + i];
                        max_change = max_change.max((new - old).abs() / (1.0 + old.abs()));
                    }
                }
                site_eta1.copy_from_slice(&pending1);
                site_eta2.copy_from_slice(&pending2);
                recompute_sums(n, d, k, &site_eta1, &site_eta2, &mut sum1, &mut sum2);
            }
        }

        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    // exact sums (the incremental cache drifts at rounding level)
    recompute_sums(n, d, k, &site_eta1, &site_eta2, &mut sum1, &mut sum2);

    // constant coefficients, outside the loop: for each site,
    // η0 ← C_probit(cavity, site + cavity; c0, c1)
    let mut eta0_ok = true;
    for j in 0..n {
        for i in 0..d {
            cav1[i] = prior.eta1[i] + sum1[i] - site_eta1[j * d + i];
            new1[i] = site_eta1[j * d + i] + cav1[i];
        }
        for i in 0..k {
            cav2[i] = prior.eta2[i] + sum2[i] - site_eta2[j * k + i];
            new2[i] = site_eta2[j * k + i] + cav2[i];
        }
        match c_probit(&cav1, &cav2, &new1, &new2, &contexts[j]) {
            Ok(v) => site_eta0[j] = v,
            Err(_) => {
                eta0_ok = false;
                site_eta0[j] = 0.0;
            }
        }
    }
    if !eta0_ok {
        converged = false;
    }
    let sum0 = site_eta0.iter().sum();

    Ok(EpGroupState {
        d,
        n_sites: n,
        site_eta0,
        site_eta1,
        site_eta2,
        prior,
        sum0,
        sum1,
        sum2,
        converged,
        iterations,
        skipped_updates,
    })
}

fn recompute_sums(
    n: usize,
    d: usize,
    k: usize,
    e1: &[f64],
    e2: &[f64],
    sum1: &mut [f64],
    sum2: &mut [f64],
) {
    sum1.iter_mut().for_each(|v| *v = 0.0);
    sum2.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..n {
        for i in 0..d {
            sum1[i] += e1[j * d + i];
        }
        for i in 0..k {
            sum2[i] += e2[j * k + i];
        }
    }
}

fn commit_site(
    site1: &mut [f64],
    site2: &mut [f64],
    cand1: &[f64],
    cand2: &[f64],
    sum1: &mut [f64],
    sum2: &mut [f64],
) -> f64 {
    let mut change = 0.0f64;
    for i in 0..site1.len() {
        let old = site1[i];
        change = change.max((cand1[i] - old).abs() / (1.0 + old.abs()));
        sum1[i] += cand1[i] - old;
        site1[i] = cand1[i];
    }
    for i in 0..site2.len() {
        let old = site2[i];
        change = change.max((cand2[i] - old).abs() / (1.0 + old.abs()));
        sum2[i] += cand2[i] - old;
        site2[i] = cand2[i];
    }
    change
}

/// The group's approximate log-likelihood contribution
/// `ℓ̃_i = (d/2)·log(2π) + (η_Σ + SUM)₀ + A_N((η_Σ + SUM)₋₀)`.
pub fn ep_group_loglik(state: &EpGroupState) -> Result<f64> {
    if !state.converged {
        return Err(Error::NoConvergence(
            "group state did not reach the EP fixed point".into(),
        ));
    }
    let post = state.posterior();
    let d = state.d as f64;
    let an = a_n(&post.eta1, &post.eta2)
        .map_err(|_| Error::NotPositiveDefinite("degenerate fit point: η_Σ + SUM not proper".into()))?;
    Ok(0.5 * d * (2.0 * std::f64::consts::PI).ln() + post.eta0 + an)
}

/// Best prediction of the group's random effect and its conditional
/// covariance from the converged state:
/// `ũ = −½{unvec(D⁺ᵀη̂₂)}⁻¹η̂₁`, `Σ̃ = −½{unvec(D⁺ᵀη̂₂)}⁻¹`.
pub fn ep_best_predict(state: &EpGroupState) -> Result<(Vec<f64>, SymMat)> {
    let post = state.posterior();
    post.mean_cov()
        .map_err(|_| Error::NotPositiveDefinite("degenerate state: posterior not proper".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{log_phi_cdf, std_normal_cdf};
    use std::f64::consts::PI;

    fn single_obs_group(y: u8, x_f: Vec<f64>, x_r: Vec<f64>) -> Group {
        Group {
            label: "g".into(),
            obs: vec![crate::data::Observation { y, x_f, x_r }],
        }
    }

    fn run_single(y: u8, beta: &[f64], sigma_val: f64) -> EpGroupState {
        let group = single_obs_group(y, vec![1.0], vec![1.0]);
        let sigma = SymMat::from_vech(vec![sigma_val]).unwrap();
        let starts = vec![ep_start_site(y, &[1.0], &[1.0], beta, &[0.0])];
        ep_group_loop(&group, beta, &sigma, &starts, &EpOptions::default()).unwrap()
    }

    #[test]
    fn start_site_values_at_zero() {
        let s = ep_start_site(1, &[1.0], &[1.0], &[0.0], &[0.0]);
        assert!((s.eta1[0] - (2.0 / PI).sqrt()).abs() < 1e-14);
        assert!((s.eta2[0] + 1.0 / PI).abs() < 1e-14);
        assert_eq!(s.eta0, 0.0);
        // y = 0 flips the ζ′ term only
        let s0 = ep_start_site(0, &[1.0], &[1.0], &[0.0], &[0.0]);
        assert!((s0.eta1[0] + (2.0 / PI).sqrt()).abs() < 1e-14);
        assert!((s0.eta2[0] - s.eta2[0]).abs() < 1e-15);
    }

    #[test]
    fn one_site_groups_are_exact() {
        // Lemma-2 closed form: ℓ̃ = log Φ((2y−1)βᵀx_F / √(x_Rᵀ Σ x_R + 1))
        let st = run_single(1, &[0.0], 1.0);
        assert!(st.converged);
        let ll = ep_group_loglik(&st).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
        assert!((ll + 0.693147).abs() < 1e-6);

        let st = run_single(1, &[1.0], 1.0);
        let ll = ep_group_loglik(&st).unwrap();
        let want = log_phi_cdf(1.0 / 2.0f64.sqrt());
        assert!((ll - want).abs() < 1e-12);
        assert!((ll + 0.27410803).abs() < 1e-6);

        let st = run_single(0, &[1.0], 2.5);
        let ll = ep_group_loglik(&st).unwrap();
        let want = log_phi_cdf(-1.0 / 3.5f64.sqrt());
        assert!((ll - want).abs() < 1e-12);
    }

    #[test]
    fn sum_cache_matches_recomputed_sum() {
        let group = Group {
            label: "g".into(),
            obs: vec![
                crate::data::Observation {
                    y: 1,
                    x_f: vec![1.0, 0.3],
                    x_r: vec![1.0],
                },
                crate::data::Observation {
                    y: 0,
                    x_f: vec![1.0, 0.8],
                    x_r: vec![1.0],
                },
                crate::data::Observation {
                    y: 1,
                    x_f: vec![1.0, 0.1],
                    x_r: vec![1.0],
                },
            ],
        };
        let beta = [0.2, 0.9];
        let sigma = SymMat::from_vech(vec![1.0]).unwrap();
        let starts: Vec<_> = group
            .obs
            .iter()
            .map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, &beta, &[0.0]))
            .collect();
        let st = ep_group_loop(&group, &beta, &sigma, &starts, &EpOptions::default()).unwrap();
        assert!(st.converged);
        let sum = st.sum_sites();
        let mut direct = NaturalParams::zeros(1);
        for j in 0..st.n_sites() {
            direct.add_assign(&st.site_message(j));
        }
        assert!((sum.eta0 - direct.eta0).abs() < 1e-12);
        assert!((sum.eta1[0] - direct.eta1[0]).abs() < 1e-12);
        assert!((sum.eta2[0] - direct.eta2[0]).abs() < 1e-12);

        // cavity identity: η_Σ + SUM − site_j is proper at the fixed point
        let post = st.posterior();
        for j in 0..st.n_sites() {
            let site = st.site_message(j);
            let cav1 = post.eta1[0] - site.eta1[0];
            let cav2 = post.eta2[0] - site.eta2[0];
            assert!(cav2 < 0.0);
            assert!(cav1.is_finite());
        }
    }

    #[test]
    fn literal_and_fresh_share_fixed_point() {
        let group = Group {
            label: "g".into(),
            obs: (0..6)
                .map(|i| crate::data::Observation {
                    y: (i % 2) as u8,
                    x_f: vec![1.0, 0.15 * i as f64],
                    x_r: vec![1.0],
                })
                .collect(),
        };
        let beta = [0.3, -0.6];
        let sigma = SymMat::from_vech(vec![0.8]).unwrap();
        let starts: Vec<_> = group
            .obs
            .iter()
            .map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, &beta, &[0.0]))
            .collect();
        let tight = EpOptions {
            tol: 1e-12,
            max_iter: 500,
            sweep: SweepMode::FreshCavity,
        };
        let fresh = ep_group_loop(&group, &beta, &sigma, &starts, &tight).unwrap();
        let literal = ep_group_loop(
            &group,
            &beta,
            &sigma,
            &starts,
            &EpOptions {
                sweep: SweepMode::Literal,
                ..tight
            },
        )
        .unwrap();
        assert!(fresh.converged && literal.converged);
        let lf = ep_group_loglik(&fresh).unwrap();
        let ll = ep_group_loglik(&literal).unwrap();
        assert!((lf - ll).abs() < 1e-9, "modes disagree: {lf} vs {ll}");
        // incremental sweeps should not be slower
        assert!(fresh.iterations <= literal.iterations);
    }

    #[test]
    fn permutation_of_sites_leaves_fixed_point() {
        let mk = |rev: bool| {
            let mut obs: Vec<_> = (0..5)
                .map(|i| crate::data::Observation {
                    y: u8::from(i % 3 == 0),
                    x_f: vec![1.0, 0.2 * i as f64],
                    x_r: vec![1.0],
                })
                .collect();
            if rev {
                obs.reverse();
            }
            Group {
                label: "g".into(),
                obs,
            }
        };
        let beta = [0.1, 0.7];
        let sigma = SymMat::from_vech(vec![1.3]).unwrap();
        let opts = EpOptions {
            tol: 1e-12,
            max_iter: 500,
            sweep: SweepMode::FreshCavity,
        };
        let lls: Vec<f64> = [false, true]
            .iter()
            .map(|&rev| {
                let g = mk(rev);
                let starts: Vec<_> = g
                    .obs
                    .iter()
                    .map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, &beta, &[0.0]))
                    .collect();
                ep_group_loglik(&ep_group_loop(&g, &beta, &sigma, &starts, &opts).unwrap())
                    .unwrap()
            })
            .collect();
        assert!((lls[0] - lls[1]).abs() < 1e-8);
    }

    #[test]
    fn best_prediction_natural_moment_map() {
        // symmetric single-site case: prediction must be positive and
        // the conditional variance below the prior variance
        let st = run_single(1, &[0.0], 1.0);
        let (u, cov) = ep_best_predict(&st).unwrap();
        assert!(u[0] > 0.0);
        assert!(cov.get(0, 0) > 0.0 && cov.get(0, 0) < 1.0);
        // y = 0 mirrors it
        let st0 = run_single(0, &[0.0], 1.0);
        let (u0, _) = ep_best_predict(&st0).unwrap();
        assert!((u[0] + u0[0]).abs() < 1e-10);
    }

    #[test]
    fn loglik_requires_convergence() {
        let group = single_obs_group(1, vec![1.0], vec![1.0]);
        let sigma = SymMat::from_vech(vec![1.0]).unwrap();
        let starts = vec![ep_start_site(1, &[1.0], &[1.0], &[0.0], &[0.0])];
        let st = ep_group_loop(
            &group,
            &[0.0],
            &sigma,
            &starts,
            &EpOptions {
                tol: 0.0, // unreachable
                max_iter: 2,
                sweep: SweepMode::FreshCavity,
            },
        )
        .unwrap();
        assert!(!st.converged);
        assert!(ep_group_loglik(&st).is_err());
    }

    #[test]
    fn marginal_probability_sanity() {
        // P(y=1) for the intercept-only model is Φ(β0/√(σ²+1));
        // the one-site exact ℓ̃ must reproduce it
        let st = run_single(1, &[0.4], 0.7);
        let ll = ep_group_loglik(&st).unwrap();
        let want = std_normal_cdf(0.4 / 1.7f64.sqrt()).ln();
        assert!((ll - want).abs() < 1e-12);
    }
}
