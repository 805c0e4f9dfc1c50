//! Numerically stable scalar special functions for the probit link:
//! Φ, φ, log Φ, ζ(x) = log{2Φ(x)} and its first two derivatives.
//!
//! ζ′(x) = φ(x)/Φ(x) is the inverse Mills ratio. Naive evaluation
//! breaks down for x below about -37 (Φ underflows) and loses relative
//! accuracy well before that, so deep-negative arguments are routed
//! through a Lentz-evaluated continued fraction for the Mills-ratio
//! gap x + ζ′(x), which is small and positive there.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

/// Branch point between the erfc-based and continued-fraction paths
/// for ζ′ and ζ″. Both branches agree to ~1e-13 in a wide window
/// around it (see the overlap test below).
const ZETA_CF_CUTOFF: f64 = -5.0;

/// Argument below which Φ itself is too close to underflow for a
/// direct log; log Φ switches to log φ(x) − log ζ′(x).
const LOGCDF_CF_CUTOFF: f64 = -37.0;

/// Standard normal density φ(x).
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.3989422804014326779;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// log φ(x).
#[inline]
pub fn log_std_normal_pdf(x: f64) -> f64 {
    const LN_SQRT_2PI: f64 = 0.9189385332046727418;
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF Φ(x). NaN propagates.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// log Φ(x), stable over the whole real line.
pub fn log_phi_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.0 {
        // Φ(x) = 1 − Q with Q = Φ(−x) ≤ 1/2
        let q = 0.5 * erfc(x * FRAC_1_SQRT_2);
        (-q).ln_1p()
    } else if x > LOGCDF_CF_CUTOFF {
        (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        // Φ = φ/ζ′ with ζ′ from the continued fraction
        log_std_normal_pdf(x) - zeta1_cf(x).ln()
    }
}

/// ζ(x) = log{2Φ(x)}.
#[inline]
pub fn zeta(x: f64) -> f64 {
    LN_2 + log_phi_cdf(x)
}

/// ζ′(x) = φ(x)/Φ(x), the inverse Mills ratio. Strictly positive,
/// asymptotically −x as x → −∞.
pub fn zeta1(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= ZETA_CF_CUTOFF {
        (log_std_normal_pdf(x) - log_phi_cdf(x)).exp()
    } else {
        zeta1_cf(x)
    }
}

/// ζ″(x) = −ζ′(x){x + ζ′(x)}. Strictly negative for finite x.
pub fn zeta2(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= ZETA_CF_CUTOFF {
        let z1 = zeta1(x);
        -z1 * (x + z1)
    } else {
        // gap = x + ζ′(x) comes straight out of the continued fraction,
        // avoiding the cancellation in x + ζ′ for deep-negative x
        let gap = mills_gap_cf(-x);
        let z1 = -x + gap;
        -z1 * gap
    }
}

#[inline]
fn zeta1_cf(x: f64) -> f64 {
    let t = -x;
    t + mills_gap_cf(t)
}

/// Continued fraction for the Mills-ratio gap
/// `g(t) = 1/ζ′(−t) − ... = 1/(t + 2/(t + 3/(t + 4/(t + …))))`,
/// so that ζ′(−t) = t + g(t). Evaluated with the modified Lentz
/// algorithm; all partial numerators are positive, so no rescue
/// branches fire in practice. Accurate for t ≳ 4.
fn mills_gap_cf(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY; // b0 = 0
    let mut c = f;
    let mut d = 0.0;
    for j in 1..=500u32 {
        let a = j as f64; // a1 = 1, a2 = 2, …
        d = t + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = t + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Complementary error function, Cody's rational approximations
/// (regions |x| ≤ 0.46875, 0.46875 < |x| ≤ 4, |x| > 4).
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let y = x.abs();
    let r = if y <= 0.46875 {
        return 1.0 - erf_small(x);
    } else if y <= 4.0 {
        erfc_mid(y)
    } else {
        erfc_far(y)
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// Error function; accurate for |x| ≤ 0.46875, defers to erfc outside.
pub fn erf(x: f64) -> f64 {
    if x.abs() <= 0.46875 {
        erf_small(x)
    } else {
        1.0 - erfc(x)
    }
}

const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERFC_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERFC_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERFC_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERFC_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const INV_SQRT_PI: f64 = 5.6418958354775628695e-1;

fn erf_small(x: f64) -> f64 {
    let ysq = x * x;
    let mut xnum = ERF_A[4] * ysq;
    let mut xden = ysq;
    for i in 0..3 {
        xnum = (xnum + ERF_A[i]) * ysq;
        xden = (xden + ERF_B[i]) * ysq;
    }
    x * (xnum + ERF_A[3]) / (xden + ERF_B[3])
}

fn erfc_mid(y: f64) -> f64 {
    let mut xnum = ERFC_C[8] * y;
    let mut xden = y;
    for i in 0..7 {
        xnum = (xnum + ERFC_C[i]) * y;
        xden = (xden + ERFC_D[i]) * y;
    }
    let result = (xnum + ERFC_C[7]) / (xden + ERFC_D[7]);
    scaled_down(y) * result
}

fn erfc_far(y: f64) -> f64 {
    if y >= 26.6 {
        return 0.0; // below the f64 underflow threshold
    }
    let ysq = 1.0 / (y * y);
    let mut xnum = ERFC_P[5] * ysq;
    let mut xden = ysq;
    for i in 0..4 {
        xnum = (xnum + ERFC_P[i]) * ysq;
        xden = (xden + ERFC_Q[i]) * ysq;
    }
    let mut result = ysq * (xnum + ERFC_P[4]) / (xden + ERFC_Q[4]);
    result = (INV_SQRT_PI - result) / y;
    scaled_down(y) * result
}

/// exp(−y²) split as exp(−hi²)·exp(−(y−hi)(y+hi)) with hi a multiple
/// of 1/16, limiting the rounding error in the large exponent.
#[inline]
fn scaled_down(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}

/// Standard normal quantile Φ⁻¹(p): Acklam's rational initialisation
/// polished with one Halley step against the erfc-based Φ.
pub fn std_normal_quantile(p: f64) -> crate::error::Result<f64> {
    use crate::error::Error;
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normal quantile needs p in (0,1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // one Halley refinement
    let e = std_normal_cdf(x) - p;
    let u = e / std_normal_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Independent Φ oracle: anchor Φ(-8) through the continued
    /// fraction, then integrate φ with composite 20-point
    /// Gauss-Legendre panels. Valid on [-8, 8] to ~1e-15 relative.
    fn phi_quadrature_oracle(x: f64) -> f64 {
        assert!((-8.0..=8.5).contains(&x));
        let anchor_x = -8.0;
        let anchor = std_normal_pdf(anchor_x) / zeta1_backward_oracle(anchor_x);
        let (nodes, weights) = gauss_legendre_20();
        let mut total = anchor;
        let n_panels = ((x - anchor_x) / 0.25).ceil().max(1.0) as usize;
        let h = (x - anchor_x) / n_panels as f64;
        for k in 0..n_panels {
            let a = anchor_x + k as f64 * h;
            let b = a + h;
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let mut acc = 0.0;
            for (t, w) in nodes.iter().zip(&weights) {
                acc += w * std_normal_pdf(mid + half * t);
            }
            total += half * acc;
        }
        total
    }

    /// Fixed-depth backward evaluation of the Mills continued fraction:
    /// same expansion as production, contrasting algorithm.
    fn zeta1_backward_oracle(x: f64) -> f64 {
        assert!(x <= -4.0);
        let t = -x;
        let mut s = 0.0;
        for k in (1..=400u32).rev() {
            s = k as f64 / (t + s);
        }
        t + s
    }

    fn gauss_legendre_20() -> (Vec<f64>, Vec<f64>) {
        // Newton iteration on P_20 via the Legendre recurrence.
        let n = 20usize;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    }

    fn legendre(n: usize, x: f64) -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }

    #[test]
    fn cdf_basic_anchors() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        // Φ(1/√2) against the independent quadrature oracle and the
        // published value 0.7602499…
        let x = FRAC_1_SQRT_2;
        let want = phi_quadrature_oracle(x);
        assert!((std_normal_cdf(x) - want).abs() < 1e-15);
        assert!((std_normal_cdf(x) - 0.7602499389065233).abs() < 2e-15);
        // asymptotic anchor: Φ(−8) = φ(−8)/ζ′(−8)
        let want = std_normal_pdf(-8.0) / zeta1_backward_oracle(-8.0);
        let got = std_normal_cdf(-8.0);
        assert!(((got - want) / want).abs() < 1e-13);
        assert!((got - 6.22096057427178e-16).abs() / got < 1e-10);
    }

    #[test]
    fn cdf_reflection_symmetry() {
        for i in 0..2000 {
            let x = -10.0 + i as f64 * 0.01;
            let lhs = std_normal_cdf(-x);
            let rhs = 1.0 - std_normal_cdf(x);
            assert!(
                (lhs - rhs).abs() <= 1e-15,
                "reflection off at x={x}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn cdf_monotone_and_nan() {
        let mut prev = 0.0;
        for i in 0..=3000 {
            let x = -15.0 + i as f64 * 0.01;
            let p = std_normal_cdf(x);
            assert!(p >= prev, "Φ must be monotone");
            prev = p;
        }
        assert!(std_normal_cdf(f64::NAN).is_nan());
        assert!(zeta1(f64::NAN).is_nan());
        assert!(zeta2(f64::NAN).is_nan());
        assert!(log_phi_cdf(f64::NAN).is_nan());
    }

    #[test]
    fn log_cdf_matches_cdf_in_safe_range() {
        for i in 0..=2000 {
            let x = -10.0 + i as f64 * 0.01;
            let direct = std_normal_cdf(x);
            let rel = (log_phi_cdf(x).exp() - direct) / direct;
            assert!(rel.abs() < 1e-13, "x={x} rel={rel:e}");
        }
    }

    #[test]
    fn zeta_values_at_zero() {
        assert!(zeta(0.0).abs() < 1e-15);
        let want = (2.0 / PI).sqrt();
        assert!((zeta1(0.0) - want).abs() < 1e-15);
        assert!((zeta2(0.0) + 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn zeta1_asymptotic_series_anchor() {
        // ζ′(−30) = 30 + 1/30 − 2/30³ + 10/30⁵ − …
        let t: f64 = 30.0;
        let series = t + 1.0 / t - 2.0 / t.powi(3) + 10.0 / t.powi(5) - 74.0 / t.powi(7)
            + 706.0 / t.powi(9);
        let got = zeta1(-30.0);
        assert!(((got - series) / got).abs() < 1e-12);
        assert!((got - 30.033259).abs() < 1e-5);
    }

    #[test]
    fn zeta1_far_right_tail() {
        // ζ′(8) ≈ φ(8): Φ(8) is within 1e-15 of 1
        let got = zeta1(8.0);
        let want = std_normal_pdf(8.0);
        assert!(((got - want) / want).abs() < 1e-12);
        assert!((got - 5.0523e-15).abs() / got < 1e-3);
    }

    #[test]
    fn zeta1_grid_against_oracles() {
        // [−40, −8]: backward continued fraction; (−8, 8]: quadrature
        let n = 10_000;
        for i in 0..n {
            let x = -40.0 + 48.0 * (i as f64 + 0.5) / n as f64;
            let got = zeta1(x);
            let want = if x <= -8.0 {
                zeta1_backward_oracle(x)
            } else {
                std_normal_pdf(x) / phi_quadrature_oracle(x)
            };
            let rel = ((got - want) / want).abs();
            assert!(rel <= 1e-10, "x={x} got={got} want={want} rel={rel:e}");
        }
    }

    #[test]
    fn zeta_branch_overlap_window() {
        // both ζ′ branches must agree around the -5 crossover
        let mut x = -8.0;
        while x <= -3.0 {
            let cf = zeta1_cf(x);
            let erfc_path = (log_std_normal_pdf(x)
                - (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln())
            .exp();
            let rel = ((cf - erfc_path) / erfc_path).abs();
            assert!(rel < 1e-12, "overlap mismatch at {x}: {rel:e}");
            x += 0.01;
        }
    }

    #[test]
    fn zeta2_identity_and_sign() {
        for i in 0..=4000 {
            let x = -40.0 + i as f64 * 0.012;
            let z2 = zeta2(x);
            assert!(z2 < 0.0, "ζ″ must be negative, x={x}");
            let z1 = zeta1(x);
            let recon = -z1 * (x + z1);
            assert!(
                ((z2 - recon) / z2).abs() < 1e-12,
                "identity residual at {x}: {} vs {}",
                z2,
                recon
            );
            assert!(z1 > 0.0);
        }
    }

    #[test]
    fn quantile_anchors() {
        let z = std_normal_quantile(0.975).unwrap();
        assert!((z - 1.959963984540054).abs() < 1e-9);
        assert!((std_normal_quantile(0.5).unwrap()).abs() < 1e-12);
        for &p in &[1e-10, 1e-4, 0.3, 0.9, 1.0 - 1e-8] {
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x) - p).abs() <= 1e-14 + 1e-12 * p);
        }
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }
}
