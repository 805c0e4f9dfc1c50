//! Unconstrained reparametrizations of the random-effect covariance:
//! the matrix-log vector `θ = vech(½·log Σ)` used for optimization and
//! the interpretable vector `ω` (log standard deviations followed by
//! atanh correlations in below-diagonal column order) used for
//! confidence interval construction.

use crate::error::{Error, Result};
use crate::linalg::{dim_from_vech_len, unvech, vech, SymMat};

/// Model parameters in their natural form.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub sigma: SymMat,
}

/// `θ = vech(½ log Σ)`.
pub fn sigma_to_theta(sigma: &SymMat) -> Result<Vec<f64>> {
    let mut half_log = sigma.matrix_log()?;
    half_log.scale(0.5);
    Ok(vech(&half_log))
}

/// Rebuild `Σ = exp(2·unvech(θ))` through the spectral decomposition.
pub fn theta_to_sigma(theta: &[f64]) -> Result<SymMat> {
    let s = unvech(theta)?;
    let spec = s.spectral()?;
    Ok(spec.apply(|l| (2.0 * l).exp()))
}

/// `ω`: log standard deviations, then atanh correlations (below the
/// diagonal, column-major). For `d = 1` this is just `log σ`.
pub fn sigma_to_omega(sigma: &SymMat) -> Result<Vec<f64>> {
    let d = sigma.dim();
    let diag = sigma.diagonal();
    if diag.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite(
            "covariance has a non-positive variance".into(),
        ));
    }
    let mut omega: Vec<f64> = diag.iter().map(|&v| v.sqrt().ln()).collect();
    if d > 1 {
        let below = sigma.vecbd()?;
        let mut idx = 0;
        for j in 0..d {
            for i in (j + 1)..d {
                let rho = below[idx] / (diag[i] * diag[j]).sqrt();
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "correlation ({i},{j}) out of (-1,1): {rho}"
                    )));
                }
                omega.push(rho.atanh());
                idx += 1;
            }
        }
    }
    Ok(omega)
}

/// Rebuild `Σ` from `ω`: variances `exp(2ω₁)`, below-diagonal entries
/// `tanh(ω₂) ⊙ vecbd(exp(ω₁) exp(ω₁)ᵀ)`, symmetry enforced.
pub fn omega_to_sigma(omega: &[f64]) -> Result<SymMat> {
    let d = dim_from_vech_len(omega.len())?;
    let mut sigma = SymMat::zeros(d);
    let sd: Vec<f64> = omega[..d].iter().map(|&w| w.exp()).collect();
    for i in 0..d {
        sigma.set(i, i, sd[i] * sd[i]);
    }
    let mut idx = d;
    for j in 0..d {
        for i in (j + 1)..d {
            sigma.set(i, j, omega[idx].tanh() * sd[i] * sd[j]);
            idx += 1;
        }
    }
    Ok(sigma)
}

/// `θ → ω` through the reconstructed covariance.
pub fn theta_to_omega(theta: &[f64]) -> Result<Vec<f64>> {
    sigma_to_omega(&theta_to_sigma(theta)?)
}

/// `ω → θ` through the reconstructed covariance.
pub fn omega_to_theta(omega: &[f64]) -> Result<Vec<f64>> {
    sigma_to_theta(&omega_to_sigma(omega)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_cases() {
        // Σ = 4 ⇒ θ = ½ log 4 = log 2 and ω = log 2
        let sigma = SymMat::from_vech(vec![4.0]).unwrap();
        let theta = sigma_to_theta(&sigma).unwrap();
        assert!((theta[0] - 2.0f64.ln()).abs() < 1e-14);
        let omega = theta_to_omega(&theta).unwrap();
        assert!((omega[0] - 2.0f64.ln()).abs() < 1e-12);
        let back = omega_to_sigma(&omega).unwrap();
        assert!((back.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_theta_is_identity_sigma() {
        let theta = vec![0.0, 0.0, 0.0];
        let sigma = theta_to_sigma(&theta).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((sigma.get(i, j) - want).abs() < 1e-14);
            }
        }
        let omega = theta_to_omega(&theta).unwrap();
        assert!(omega.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn study2_covariance_roundtrip() {
        let sigma = SymMat::from_rows(&[&[0.53, -0.36], &[-0.36, 0.92]]).unwrap();
        let omega = sigma_to_omega(&sigma).unwrap();
        assert!((omega[0] - 0.53f64.sqrt().ln()).abs() < 1e-14);
        assert!((omega[1] - 0.92f64.sqrt().ln()).abs() < 1e-14);
        let rho = -0.36 / (0.53f64 * 0.92).sqrt();
        assert!((omega[2] - rho.atanh()).abs() < 1e-14);
        let theta = omega_to_theta(&omega).unwrap();
        let back = theta_to_sigma(&theta).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.get(i, j) - sigma.get(i, j)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn omega_theta_roundtrip(d in 1usize..=4, raw in proptest::collection::vec(-1.2f64..1.2, 10)) {
            // log-sds roam freely; atanh-correlations stay small enough
            // that the implied matrix is positive definite for d ≤ 4
            // (pairwise correlations of a valid matrix always are, but
            // arbitrary combinations need not be for d ≥ 3)
            let len = d * (d + 1) / 2;
            let mut omega: Vec<f64> = raw[..len].to_vec();
            for w in omega.iter_mut().skip(d) {
                *w *= 0.25;
            }
            let theta = omega_to_theta(&omega).unwrap();
            prop_assert_eq!(theta.len(), len);
            let back = theta_to_omega(&theta).unwrap();
            for (a, b) in back.iter().zip(&omega) {
                prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            }
        }
    }
}
