//! Simulation studies: dataset generation under the probit mixed
//! model, confidence-interval coverage experiments across fitting
//! methods, and EP-versus-quadrature discrepancy sweeps.
//!
//! Randomness comes from a counter-based generator (ChaCha8) with
//! explicit seeding; replication `r` draws from stream `r + 1` of the
//! configured seed, so runs are reproducible under any parallel
//! schedule.

use crate::data::{Group, GroupedDataset, Observation};
use crate::ep::{ep_group_loglik, ep_group_loop, ep_start_site, EpOptions};
use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::mle::{optimize, FitConfig, FitMethod};
use crate::oracles::{aghq_group_loglik, laplace_group};
use crate::special::{std_normal_cdf, std_normal_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Group-size rule: every group the same size, or sizes drawn from a
/// discrete uniform range (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSizeRule {
    Fixed(usize),
    UniformRange { lo: usize, hi: usize },
}

impl GroupSizeRule {
    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            GroupSizeRule::Fixed(n) => n,
            GroupSizeRule::UniformRange { lo, hi } => rng.gen_range(lo..=hi),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GroupSizeRule::Fixed(n) => n >= 1,
            GroupSizeRule::UniformRange { lo, hi } => lo >= 1 && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "group sizes must be at least 1".into(),
            ))
        }
    }
}

/// True model and design for a simulation: intercept plus iid
/// Uniform(0,1) fixed-effect columns, with the random-effect design
/// being the leading columns of the fixed design.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub beta: Vec<f64>,
    pub sigma: SymMat,
    pub m: usize,
    pub size_rule: GroupSizeRule,
    pub seed: u64,
}

impl SimConfig {
    pub fn d_f(&self) -> usize {
        self.beta.len()
    }

    pub fn d_r(&self) -> usize {
        self.sigma.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() || self.m == 0 {
            return Err(Error::InvalidArgument(
                "simulation needs at least one coefficient and one group".into(),
            ));
        }
        if self.d_r() > self.d_f() {
            return Err(Error::Dimension(
                "random-effect design is a prefix of the fixed design; d_r must not exceed d_f"
                    .into(),
            ));
        }
        self.size_rule.validate()?;
        self.sigma
            .cholesky()
            .map_err(|_| Error::NotPositiveDefinite("true covariance must be SPD".into()))?;
        Ok(())
    }

    /// Classic single-random-intercept configuration:
    /// `β = [0, 1]`, `σ² = 1`, `m = 100`, `n_i = 2`.
    pub fn study1(seed: u64) -> Self {
        SimConfig {
            beta: vec![0.0, 1.0],
            sigma: SymMat::from_vech(vec![1.0]).unwrap(),
            m: 100,
            size_rule: GroupSizeRule::Fixed(2),
            seed,
        }
    }

    /// Bivariate random-effect configuration:
    /// `β = [0.37, 0.93, −0.46, 0.08, −1.34, 1.09]`,
    /// `Σ = [[0.53, −0.36], [−0.36, 0.92]]`, sizes uniform on 20..=30.
    pub fn study2(m: usize, seed: u64) -> Self {
        SimConfig {
            beta: vec![0.37, 0.93, -0.46, 0.08, -1.34, 1.09],
            sigma: SymMat::from_rows(&[&[0.53, -0.36], &[-0.36, 0.92]]).unwrap(),
            m,
            size_rule: GroupSizeRule::UniformRange { lo: 20, hi: 30 },
            seed,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_group(
    config: &SimConfig,
    chol: &crate::linalg::Cholesky,
    label: String,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Group {
    let d_f = config.d_f();
    let d_r = config.d_r();
    let z: Vec<f64> = (0..d_r).map(|_| rng.sample(StandardNormal)).collect();
    let u = chol.lower_matvec(&z);
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x_f = Vec::with_capacity(d_f);
        x_f.push(1.0);
        for _ in 1..d_f {
            x_f.push(rng.gen::<f64>());
        }
        let x_r = x_f[..d_r].to_vec();
        let lin: f64 = config.beta.iter().zip(&x_f).map(|(a, b)| a * b).sum::<f64>()
            + u.iter().zip(&x_r).map(|(a, b)| a * b).sum::<f64>();
        let y = u8::from(rng.gen::<f64>() < std_normal_cdf(lin));
        obs.push(Observation { y, x_f, x_r });
    }
    Group { label, obs }
}

/// Generate one dataset from the base stream of the configured seed.
pub fn simulate(config: &SimConfig) -> Result<GroupedDataset> {
    simulate_stream(config, 0)
}

/// Generate one dataset from an explicit stream (replication index).
pub fn simulate_stream(config: &SimConfig, stream: u64) -> Result<GroupedDataset> {
    config.validate()?;
    let chol = config.sigma.cholesky()?;
    let mut rng = rng_for(config.seed, stream);
    let width = (config.m as f64).log10() as usize + 1;
    let groups = (0..config.m)
        .map(|i| {
            let n = config.size_rule.draw(&mut rng);
            draw_group(config, &chol, format!("g{:0width$}", i + 1), n, &mut rng)
        })
        .collect();
    GroupedDataset::new(config.d_f(), config.d_r(), groups)
}

/// Per-parameter coverage summary over completed replications.
#[derive(Debug, Clone)]
pub struct ParamCoverage {
    pub name: String,
    pub true_value: f64,
    pub hits: usize,
    pub count: usize,
    pub coverage: f64,
    /// 99% Wilson score interval on the coverage fraction.
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_ci_width: f64,
    pub mean_bias: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TimingQuantiles {
    pub median_s: f64,
    pub q90_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone)]
pub struct MethodCoverage {
    pub method: String,
    pub replications: usize,
    pub excluded: usize,
    pub params: Vec<ParamCoverage>,
    pub timing: TimingQuantiles,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub replications_requested: usize,
    pub alpha: f64,
    pub methods: Vec<MethodCoverage>,
}

/// Names and true values of the interpretable parameters, in CI-table
/// row order.
pub fn true_parameter_rows(config: &SimConfig) -> Vec<(String, f64)> {
    let mut rows: Vec<(String, f64)> = config
        .beta
        .iter()
        .enumerate()
        .map(|(k, &v)| (format!("beta{k}"), v))
        .collect();
    let d = config.d_r();
    let diag = config.sigma.diagonal();
    for k in 0..d {
        rows.push((format!("sigma{}", k + 1), diag[k].sqrt()));
    }
    for j in 0..d {
        for i in (j + 1)..d {
            let rho = config.sigma.get(i, j) / (diag[i] * diag[j]).sqrt();
            rows.push((format!("rho{}{}", i + 1, j + 1), rho));
        }
    }
    rows
}

fn wilson_99(hits: usize, count: usize) -> (f64, f64) {
    if count == 0 {
        return (0.0, 1.0);
    }
    let z = std_normal_quantile(0.995).expect("fixed quantile");
    let n = count as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Simulate `n_reps` datasets and fit each with every requested method,
/// recording per-parameter CI hits, widths, bias and fit timings.
/// Replications whose fit fails (or yields no usable intervals) are
/// excluded and counted.
pub fn run_coverage(
    config: &SimConfig,
    n_reps: usize,
    alpha: f64,
    methods: &[FitMethod],
    base: &FitConfig,
) -> Result<CoverageReport> {
    config.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0,1)".into()));
    }
    let truth = true_parameter_rows(config);
    let n_params = truth.len();

    struct RepOutcome {
        // per method: None = excluded, Some(rows) with (hit, width, bias)
        per_method: Vec<Option<Vec<(bool, f64, f64)>>>,
        times: Vec<f64>,
    }

    let outcomes: Vec<RepOutcome> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let data = simulate_stream(config, rep as u64 + 1)
                .expect("validated config cannot fail to simulate");
            let mut per_method = Vec::with_capacity(methods.len());
            let mut times = Vec::with_capacity(methods.len());
            for &method in methods {
                let fit_config = FitConfig {
                    method,
                    alpha,
                    ..*base
                };
                let t0 = std::time::Instant::now();
                let fit = optimize(&data, &fit_config);
                times.push(t0.elapsed().as_secs_f64());
                match fit {
                    Ok(res) if res.ci.reliable => {
                        let mut rows = Vec::with_capacity(n_params);
                        let mut usable = true;
                        for (row, (_, true_v)) in res.ci.rows.iter().zip(&truth) {
                            match (row.lower, row.upper) {
                                (Some(lo), Some(hi)) => {
                                    let hit = lo <= *true_v && *true_v <= hi;
                                    rows.push((hit, hi - lo, row.estimate - *true_v));
                                }
                                _ => {
                                    usable = false;
                                    break;
                                }
                            }
                        }
                        per_method.push(if usable { Some(rows) } else { None });
                    }
                    _ => per_method.push(None),
                }
            }
            RepOutcome { per_method, times }
        })
        .collect();

    let mut out_methods = Vec::with_capacity(methods.len());
    for (mi, &method) in methods.iter().enumerate() {
        let mut hits = vec![0usize; n_params];
        let mut count = 0usize;
        let mut width_sum = vec![0.0f64; n_params];
        let mut bias_sum = vec![0.0f64; n_params];
        let mut excluded = 0usize;
        let mut times: Vec<f64> = Vec::with_capacity(n_reps);
        for o in &outcomes {
            times.push(o.times[mi]);
            match &o.per_method[mi] {
                Some(rows) => {
                    count += 1;
                    for (k, (hit, width, bias)) in rows.iter().enumerate() {
                        if *hit {
                            hits[k] += 1;
                        }
                        width_sum[k] += width;
                        bias_sum[k] += bias;
                    }
                }
                None => excluded += 1,
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let timing = if times.is_empty() {
            TimingQuantiles::default()
        } else {
            TimingQuantiles {
                median_s: times[times.len() / 2],
                q90_s: times[((times.len() * 9) / 10).min(times.len() - 1)],
                max_s: *times.last().unwrap(),
            }
        };
        let params = truth
            .iter()
            .enumerate()
            .map(|(k, (name, true_v))| {
                let (wl, wh) = wilson_99(hits[k], count);
                ParamCoverage {
                    name: name.clone(),
                    true_value: *true_v,
                    hits: hits[k],
                    count,
                    coverage: if count == 0 {
                        0.0
                    } else {
                        hits[k] as f64 / count as f64
                    },
                    wilson_low: wl,
                    wilson_high: wh,
                    mean_ci_width: if count == 0 {
                        0.0
                    } else {
                        width_sum[k] / count as f64
                    },
                    mean_bias: if count == 0 {
                        0.0
                    } else {
                        bias_sum[k] / count as f64
                    },
                }
            })
            .collect();
        out_methods.push(MethodCoverage {
            method: method.name().to_string(),
            replications: n_reps,
            excluded,
            params,
            timing,
        });
    }
    Ok(CoverageReport {
        replications_requested: n_reps,
        alpha,
        methods: out_methods,
    })
}

/// One row of the EP-versus-quadrature discrepancy table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_i: usize,
    pub reps: usize,
    pub mean_abs: f64,
    pub sd_abs: f64,
}

/// For each group size in the grid, simulate `reps` single groups at
/// the given true parameters and record `|ℓ̃_i − ℓ_i|` against the
/// order-100 adaptive quadrature oracle.
pub fn discrepancy_sweep(
    beta: &[f64],
    sigma: &SymMat,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    ep: &EpOptions,
) -> Result<Vec<SweepRow>> {
    if sigma.dim() > 2 {
        return Err(Error::OracleDimension(sigma.dim()));
    }
    let config = SimConfig {
        beta: beta.to_vec(),
        sigma: sigma.clone(),
        m: 1,
        size_rule: GroupSizeRule::Fixed(1),
        seed,
    };
    config.validate()?;
    let chol = sigma.cholesky()?;

    let mut rows = Vec::with_capacity(n_grid.len());
    for (gi, &n_i) in n_grid.iter().enumerate() {
        if n_i == 0 {
            return Err(Error::InvalidArgument("group sizes must be positive".into()));
        }
        let diffs: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rng_for(seed, (gi as u64) << 32 | (rep as u64 + 1));
                let group = draw_group(&config, &chol, format!("s{rep}"), n_i, &mut rng);
                let u_hat = laplace_group(&group, beta, sigma)
                    .map(|f| f.mode)
                    .unwrap_or_else(|_| vec![0.0; sigma.dim()]);
                let starts: Vec<_> = group
                    .obs
                    .iter()
                    .map(|o| ep_start_site(o.y, &o.x_f, &o.x_r, beta, &u_hat))
                    .collect();
                let state = ep_group_loop(&group, beta, sigma, &starts, ep)?;
                let ep_ll = ep_group_loglik(&state)?;
                let exact = aghq_group_loglik(&group, beta, sigma, 100)?;
                Ok((ep_ll - exact).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = diffs.iter().sum::<f64>() / diffs.len().max(1) as f64;
        let var = if diffs.len() > 1 {
            diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64
        } else {
            0.0
        };
        rows.push(SweepRow {
            n_i,
            reps,
            mean_abs: mean,
            sd_abs: var.sqrt(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let config = SimConfig::study1(42);
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a, b);
        let c = simulate_stream(&config, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn saturated_intercept_is_all_ones() {
        let config = SimConfig {
            beta: vec![10.0],
            sigma: SymMat::from_vech(vec![1e-12]).unwrap(),
            m: 50,
            size_rule: GroupSizeRule::Fixed(4),
            seed: 7,
        };
        let ds = simulate(&config).unwrap();
        let ones: usize = ds
            .groups
            .iter()
            .flat_map(|g| g.obs.iter())
            .filter(|o| o.y == 1)
            .count();
        assert_eq!(ones, ds.n_total());
    }

    #[test]
    fn marginal_event_rate_matches_closed_form() {
        // intercept-only: P(y=1) = Φ(β0/√(σ²+1)); Monte-Carlo within 3σ
        let config = SimConfig {
            beta: vec![0.0],
            sigma: SymMat::from_vech(vec![1.0]).unwrap(),
            m: 20_000,
            size_rule: GroupSizeRule::Fixed(5),
            seed: 11,
        };
        let ds = simulate(&config).unwrap();
        let n = ds.n_total() as f64;
        let rate = ds
            .groups
            .iter()
            .flat_map(|g| g.obs.iter())
            .filter(|o| o.y == 1)
            .count() as f64
            / n;
        // truth = 0.5; but responses within a group are correlated, so
        // allow the group-level binomial bound
        let se = 0.5 / (config.m as f64).sqrt();
        assert!((rate - 0.5).abs() < 3.0 * se, "rate {rate}");
    }

    #[test]
    fn group_sizes_follow_the_rule() {
        let config = SimConfig {
            beta: vec![0.0, 1.0],
            sigma: SymMat::from_vech(vec![1.0]).unwrap(),
            m: 200,
            size_rule: GroupSizeRule::UniformRange { lo: 3, hi: 6 },
            seed: 5,
        };
        let ds = simulate(&config).unwrap();
        assert!(ds.groups.iter().all(|g| (3..=6).contains(&g.len())));
        let sizes: std::collections::HashSet<usize> =
            ds.groups.iter().map(|g| g.len()).collect();
        assert!(sizes.len() > 1, "range rule should vary sizes");
    }

    #[test]
    fn zero_replication_coverage_is_empty_not_a_crash() {
        let config = SimConfig::study1(3);
        let report = run_coverage(
            &config,
            0,
            0.05,
            &[FitMethod::Ep],
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(report.methods.len(), 1);
        assert_eq!(report.methods[0].params[0].count, 0);
        assert_eq!(report.methods[0].excluded, 0);
    }

    #[test]
    fn wilson_interval_basics() {
        let (lo, hi) = wilson_99(95, 100);
        assert!(lo < 0.95 && 0.95 < hi);
        assert!(lo > 0.85 && hi < 1.0);
        let (lo, hi) = wilson_99(0, 0);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn true_rows_study2_order() {
        let c = SimConfig::study2(10, 0);
        let rows = true_parameter_rows(&c);
        let names: Vec<&str> = rows.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            names,
            ["beta0", "beta1", "beta2", "beta3", "beta4", "beta5", "sigma1", "sigma2", "rho21"]
        );
        assert!((rows[6].1 - 0.53f64.sqrt()).abs() < 1e-15);
        assert!((rows[8].1 - (-0.36 / (0.53f64 * 0.92).sqrt())).abs() < 1e-15);
    }
}
