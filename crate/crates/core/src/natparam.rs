//! Natural parameters of unnormalized Gaussian densities and the
//! closed-form moment-matching projection of a probit-tilted Gaussian.
//!
//! An unnormalized Gaussian on `R^d` is written in exponential-family
//! form as `exp([1, x, vech(x xᵀ)]ᵀ [η0, η1, η2])`. The coefficient
//! vector `η2` of `vech(x xᵀ)` encodes the symmetric quadratic-form
//! matrix `M = unvec(D_d⁺ᵀ η2)`; the density is integrable ("proper")
//! exactly when `−M` is positive definite, in which case the precision
//! is `−2M`.
//!
//! [`k_probit`]/[`c_probit`] evaluate the tilt projection: the unique
//! unnormalized Gaussian whose zeroth, first and second moments match
//! those of `Φ(c0 + c1ᵀx) · exp([x, vech(x xᵀ)]ᵀ [a1, a2])`.

use crate::error::{Error, Result};
use crate::linalg::{vech_index, vech_len, Cholesky, SymMat};
use crate::special::{log_phi_cdf, zeta1, zeta2};

/// Natural parameter vector `(η0, η1, η2)` of an unnormalized Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    /// Coefficient of the constant sufficient statistic 1.
    pub eta0: f64,
    /// Coefficient vector of `x` (length `d`).
    pub eta1: Vec<f64>,
    /// Coefficient vector of `vech(x xᵀ)` (length `d(d+1)/2`).
    pub eta2: Vec<f64>,
}

impl NaturalParams {
    pub fn zeros(d: usize) -> Self {
        NaturalParams {
            eta0: 0.0,
            eta1: vec![0.0; d],
            eta2: vec![0.0; vech_len(d)],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.eta1.len()
    }

    /// Natural parameters of `mass · N(mean, cov)` with
    /// `log(mass) = log_mass`.
    pub fn from_mean_cov(log_mass: f64, mean: &[f64], cov: &SymMat) -> Result<Self> {
        let d = cov.dim();
        if mean.len() != d {
            return Err(Error::Dimension("mean/cov dimension mismatch".into()));
        }
        let chol = cov.cholesky()?;
        let precision = chol.inverse();
        let eta1 = chol.solve(mean);
        let mut half_neg_prec = precision;
        half_neg_prec.scale(-0.5);
        let eta2 = eta2_encode(&half_neg_prec);
        // η0 = log mass − ½ log|2πΣ| − ½ μᵀΣ⁻¹μ
        let quad: f64 = mean.iter().zip(&eta1).map(|(m, e)| m * e).sum();
        let eta0 = log_mass
            - 0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + chol.logdet())
            - 0.5 * quad;
        Ok(NaturalParams { eta0, eta1, eta2 })
    }

    /// The quadratic-form matrix `M = unvec(D_d⁺ᵀ η2)`.
    pub fn quad_matrix(&self) -> SymMat {
        eta2_decode(&self.eta2)
    }

    /// Whether the density is integrable (`−M` positive definite).
    pub fn is_proper(&self) -> bool {
        let mut neg = self.quad_matrix();
        neg.scale(-1.0);
        neg.cholesky().is_ok()
    }

    /// Mean and covariance of the proper density:
    /// `μ = −½M⁻¹η1`, `Σ = −½M⁻¹`.
    pub fn mean_cov(&self) -> Result<(Vec<f64>, SymMat)> {
        let mut neg = self.quad_matrix();
        neg.scale(-1.0);
        let chol = neg.cholesky()?;
        let mut cov = chol.inverse();
        cov.scale(0.5);
        let mut mean = chol.solve(&self.eta1);
        mean.iter_mut().for_each(|v| *v *= 0.5);
        Ok((mean, cov))
    }

    /// `log ∫ f = η0 + (d/2)·log(2π) + A_N(η1, η2)`.
    pub fn log_mass(&self) -> Result<f64> {
        let d = self.dim() as f64;
        Ok(self.eta0 + 0.5 * d * (2.0 * std::f64::consts::PI).ln() + a_n(&self.eta1, &self.eta2)?)
    }

    pub fn add_assign(&mut self, other: &NaturalParams) {
        self.eta0 += other.eta0;
        for (a, b) in self.eta1.iter_mut().zip(&other.eta1) {
            *a += b;
        }
        for (a, b) in self.eta2.iter_mut().zip(&other.eta2) {
            *a += b;
        }
    }
}

/// Auxiliary arguments of one probit tilt: the site's offset `c0` and
/// direction `c1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteContext {
    pub c0: f64,
    pub c1: Vec<f64>,
}

/// `η2 = D_dᵀ vec(M)` for a symmetric quadratic-form matrix `M`:
/// vech layout with off-diagonal entries doubled.
pub fn eta2_encode(m: &SymMat) -> Vec<f64> {
    let d = m.dim();
    let mut out = vec![0.0; vech_len(d)];
    eta2_encode_into(m, &mut out);
    out
}

pub(crate) fn eta2_encode_into(m: &SymMat, out: &mut [f64]) {
    let d = m.dim();
    debug_assert_eq!(out.len(), vech_len(d));
    for j in 0..d {
        for i in j..d {
            let scale = if i == j { 1.0 } else { 2.0 };
            out[vech_index(d, i, j)] = scale * m.get(i, j);
        }
    }
}

/// `M = unvec(D_d⁺ᵀ η2)`: vech layout with off-diagonal entries halved.
pub fn eta2_decode(eta2: &[f64]) -> SymMat {
    let d = crate::linalg::dim_from_vech_len(eta2.len())
        .expect("eta2 length must be a vech length");
    let mut m = SymMat::zeros(d);
    eta2_decode_into(eta2, &mut m);
    m
}

pub(crate) fn eta2_decode_into(eta2: &[f64], m: &mut SymMat) {
    let d = m.dim();
    debug_assert_eq!(eta2.len(), vech_len(d));
    let v = m.vech_mut();
    for j in 0..d {
        for i in j..d {
            let scale = if i == j { 1.0 } else { 0.5 };
            v[vech_index(d, i, j)] = scale * eta2[vech_index(d, i, j)];
        }
    }
}

/// Log-normalizer exponent of a proper unnormalized Gaussian:
/// `A_N(η) = −¼ η1ᵀ A2⁻¹ η1 − ½ log|−2 A2|` with `A2 = unvec(D⁺ᵀ η2)`,
/// so that `∫ exp(xᵀη1 + vech(x xᵀ)ᵀη2) dx = (2π)^{d/2} exp(A_N)`.
pub fn a_n(eta1: &[f64], eta2: &[f64]) -> Result<f64> {
    let d = eta1.len();
    if eta2.len() != vech_len(d) {
        return Err(Error::Dimension("eta1/eta2 length mismatch".into()));
    }
    let mut nega = eta2_decode(eta2);
    nega.scale(-1.0);
    let chol = nega.cholesky().map_err(|_| {
        Error::NotPositiveDefinite("A_N needs a proper natural parameter vector".into())
    })?;
    // a1ᵀA2⁻¹a1 = −a1ᵀ(−A2)⁻¹a1
    Ok(0.25 * chol.inv_quad_form(eta1) - 0.5 * (d as f64 * std::f64::consts::LN_2 + chol.logdet()))
}

/// Workspace for repeated projections of a fixed dimension.
pub(crate) struct ProjScratch {
    d: usize,
    a2m: SymMat,
    nega: SymMat,
    negb: SymMat,
    chol_a: Cholesky,
    chol_b: Cholesky,
    sa: Vec<f64>,
    sc: Vec<f64>,
    w: Vec<f64>,
    col: Vec<f64>,
    mstar: SymMat,
}

impl ProjScratch {
    pub fn new(d: usize) -> Self {
        ProjScratch {
            d,
            a2m: SymMat::zeros(d),
            nega: SymMat::zeros(d),
            negb: SymMat::zeros(d),
            chol_a: Cholesky::placeholder(d),
            chol_b: Cholesky::placeholder(d),
            sa: vec![0.0; d],
            sc: vec![0.0; d],
            w: vec![0.0; d],
            col: vec![0.0; d],
            mstar: SymMat::zeros(d),
        }
    }

    /// `K_probit`: writes the projected `(η1*, η2*)` into `out1`/`out2`.
    pub fn k_probit_into(
        &mut self,
        a1: &[f64],
        a2: &[f64],
        ctx: &SiteContext,
        out1: &mut [f64],
        out2: &mut [f64],
    ) -> Result<()> {
        let d = self.d;
        debug_assert_eq!(a1.len(), d);
        debug_assert_eq!(ctx.c1.len(), d);
        eta2_decode_into(a2, &mut self.a2m);
        self.nega.copy_scaled_from(&self.a2m, -1.0);
        self.chol_a
            .refactor(&self.nega)
            .map_err(|_| Error::NotPositiveDefinite("projection input not proper".into()))?;

        // A2⁻¹c1 = −(−A2)⁻¹c1 and likewise for a1
        self.sc.copy_from_slice(&ctx.c1);
        self.chol_a.solve_in_place(&mut self.sc);
        self.sa.copy_from_slice(a1);
        self.chol_a.solve_in_place(&mut self.sa);
        let c1_a2inv_c1: f64 = -dot(&ctx.c1, &self.sc);
        let c1_a2inv_a1: f64 = -dot(&ctx.c1, &self.sa);

        let radicand = 2.0 * (2.0 - c1_a2inv_c1);
        if !(radicand > 0.0) {
            return Err(Error::SiteUpdate("r1 radicand not positive".into()));
        }
        let r1 = radicand.sqrt();
        let r2 = (2.0 * ctx.c0 - c1_a2inv_a1) / r1;
        let r3 = 2.0 * zeta1(r2) / r1;
        let r4 = -2.0 * zeta2(r2) / (r1 * r1);

        // −B = −A2 − r4 c1 c1ᵀ must be SPD for the output to be proper
        self.negb.copy_scaled_from(&self.a2m, -1.0);
        self.negb.rank1_update(&ctx.c1, -r4);
        self.chol_b
            .refactor(&self.negb)
            .map_err(|_| Error::SiteUpdate("projected precision not positive definite".into()))?;

        // η1* = R5ᵀ(a1 + r3 c1) = −A2 (−B)⁻¹ (a1 + r3 c1)
        for i in 0..d {
            self.w[i] = a1[i] + r3 * ctx.c1[i];
        }
        self.chol_b.solve_in_place(&mut self.w);
        let e1 = self.a2m.matvec(&self.w);
        for i in 0..d {
            out1[i] = -e1[i];
        }

        // M* = R5ᵀ A2 = −A2 (−B)⁻¹ A2, column by column
        for j in 0..d {
            for i in 0..d {
                self.col[i] = self.a2m.get(i, j);
            }
            self.chol_b.solve_in_place(&mut self.col);
            for i in j..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.a2m.get(i, k) * self.col[k];
                }
                self.mstar.set(i, j, -acc);
            }
        }
        eta2_encode_into(&self.mstar, out2);
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `K_probit` of the projection: natural parameters `(η1*, η2*)` of the
/// moment-matched Gaussian for the tilt `Φ(c0 + c1ᵀx)`.
pub fn k_probit(a1: &[f64], a2: &[f64], ctx: &SiteContext) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = a1.len();
    if a2.len() != vech_len(d) || ctx.c1.len() != d {
        return Err(Error::Dimension("k_probit argument lengths disagree".into()));
    }
    let mut scratch = ProjScratch::new(d);
    let mut out1 = vec![0.0; d];
    let mut out2 = vec![0.0; vech_len(d)];
    scratch.k_probit_into(a1, a2, ctx, &mut out1, &mut out2)?;
    Ok((out1, out2))
}

/// `C_probit`: the projected zeroth-moment exponent
/// `log Φ(r2) + ¼ b1ᵀB2⁻¹b1 − ¼ a1ᵀA2⁻¹a1 + ½ log{|B2|/|A2|}`,
/// which equals `log Φ(r2) + A_N(a) − A_N(b)`.
pub fn c_probit(a1: &[f64], a2: &[f64], b1: &[f64], b2: &[f64], ctx: &SiteContext) -> Result<f64> {
    let d = a1.len();
    if a2.len() != vech_len(d) || b1.len() != d || b2.len() != vech_len(d) || ctx.c1.len() != d {
        return Err(Error::Dimension("c_probit argument lengths disagree".into()));
    }
    let mut nega = eta2_decode(a2);
    nega.scale(-1.0);
    let chol_a = nega
        .cholesky()
        .map_err(|_| Error::NotPositiveDefinite("c_probit first argument not proper".into()))?;
    let mut negb = eta2_decode(b2);
    negb.scale(-1.0);
    let chol_b = negb
        .cholesky()
        .map_err(|_| Error::NotPositiveDefinite("c_probit second argument not proper".into()))?;

    let sc = chol_a.solve(&ctx.c1);
    let sa = chol_a.solve(a1);
    let c1_a2inv_c1 = -dot(&ctx.c1, &sc);
    let c1_a2inv_a1 = -dot(&ctx.c1, &sa);
    let r1 = (2.0 * (2.0 - c1_a2inv_c1)).sqrt();
    let r2 = (2.0 * ctx.c0 - c1_a2inv_a1) / r1;

    // quadratic forms in the original (negative definite) matrices
    let quad_a = -chol_a.inv_quad_form(a1);
    let quad_b = -chol_b.inv_quad_form(b1);
    // |B2|/|A2| = |−B2|/|−A2|
    let logdet_ratio = chol_b.logdet() - chol_a.logdet();
    Ok(log_phi_cdf(r2) + 0.25 * quad_b - 0.25 * quad_a + 0.5 * logdet_ratio)
}

/// Full projection of `Φ(c0 + c1ᵀx) · f_input` onto the unnormalized
/// Gaussian family (moment matching in the zeroth, first and second
/// moments). `input.eta0` carries through additively.
pub fn project_probit_site(input: &NaturalParams, ctx: &SiteContext) -> Result<NaturalParams> {
    let (eta1, eta2) = k_probit(&input.eta1, &input.eta2, ctx)?;
    let shift = c_probit(&input.eta1, &input.eta2, &eta1, &eta2, ctx)?;
    Ok(NaturalParams {
        eta0: input.eta0 + shift,
        eta1,
        eta2,
    })
}
