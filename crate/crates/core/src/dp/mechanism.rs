use alloc::vec::Vec;

use rand::Rng;

use super::{AccountId, DpError, Ledger, PrivacyBudget};
use crate::linalg::SquareMatrix;
use crate::rng::standard_normal;

/// Per-coordinate standard deviation `Δ / √(2ρ)` of the Gaussian mechanism.
pub fn gaussian_sigma(sensitivity: f64, rho: f64) -> f64 {
    if sensitivity == 0.0 {
        0.0
    } else {
        sensitivity / libm::sqrt(2.0 * rho)
    }
}

/// Releases `value + η`, `η_i ~ N(0, Δ²/(2ρ))`, charging `ρ` to `account`.
///
/// With zero sensitivity the value is returned unchanged and nothing is
/// charged.
pub fn gaussian_vector_mechanism<R: Rng + ?Sized>(
    value: &[f64],
    sensitivity: f64,
    budget: PrivacyBudget,
    ledger: &mut Ledger,
    account: AccountId,
    label: &str,
    rng: &mut R,
) -> Result<Vec<f64>, DpError> {
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(DpError::InvalidSensitivity(sensitivity));
    }
    if sensitivity == 0.0 {
        return Ok(value.to_vec());
    }
    if budget.is_zero() {
        return Err(DpError::NonpositiveBudget);
    }
    ledger.charge(account, label, budget.rho(), sensitivity)?;
    let sigma = gaussian_sigma(sensitivity, budget.rho());
    Ok(value
        .iter()
        .map(|v| v + sigma * standard_normal(rng))
        .collect())
}

/// `(Z′ + Z′ᵀ)/√2` with `Z′` i.i.d. `N(0, σ²)`, drawn row-major. Off-diagonal
/// entries keep variance `σ²`; the result is exactly symmetric.
pub fn symmetric_gaussian_matrix<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> SquareMatrix {
    let mut out = SquareMatrix::zeros(d);
    if sigma == 0.0 {
        return out;
    }
    let raw: Vec<f64> = (0..d * d).map(|_| sigma * standard_normal(rng)).collect();
    let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i..d {
            let v = (raw[i * d + j] + raw[j * d + i]) * inv_sqrt2;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

/// `ρ`-zCDP implies `(ρ + 2√(ρ ln(1/δ)), δ)`-DP.
pub fn zcdp_to_dp(rho: f64, delta: f64) -> Result<f64, DpError> {
    let rho = PrivacyBudget::new(rho)?.rho();
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::InvalidDelta(delta));
    }
    Ok(rho + 2.0 * libm::sqrt(rho * libm::log(1.0 / delta)))
}

/// Rényi divergence of order `α` between `N(μ, σ²)` and `N(ν, σ²)`.
pub fn renyi_gaussian(mu: f64, nu: f64, sigma2: f64, alpha: f64) -> Result<f64, DpError> {
    if !(alpha > 1.0) {
        return Err(DpError::InvalidAlpha(alpha));
    }
    if !(sigma2 > 0.0) {
        return Err(DpError::InvalidVariance(sigma2));
    }
    let diff = mu - nu;
    Ok(alpha * diff * diff / (2.0 * sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamLabel, stream};
    use alloc::vec;

    fn rng() -> crate::rng::StreamRng {
        stream(11, StreamLabel::new(Purpose::Audit, 0, 0))
    }

    #[test]
    fn zero_sensitivity_is_free_and_exact() {
        let mut ledger = Ledger::new(PrivacyBudget::new(1.0).unwrap());
        let out = gaussian_vector_mechanism(
            &[1.0, 2.0],
            0.0,
            PrivacyBudget::ZERO,
            &mut ledger,
            AccountId::MAIN,
            "y",
            &mut rng(),
        )
        .unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
        assert_eq!(ledger.spent(), 0.0);
    }

    #[test]
    fn nonzero_sensitivity_needs_budget() {
        let mut ledger = Ledger::new(PrivacyBudget::new(1.0).unwrap());
        let err = gaussian_vector_mechanism(
            &[0.0],
            1.0,
            PrivacyBudget::ZERO,
            &mut ledger,
            AccountId::MAIN,
            "y",
            &mut rng(),
        );
        assert_eq!(err, Err(DpError::NonpositiveBudget));
    }

    #[test]
    fn charges_and_is_reproducible() {
        let mut l1 = Ledger::new(PrivacyBudget::new(1.0).unwrap());
        let mut l2 = l1.clone();
        let b = PrivacyBudget::new(0.5).unwrap();
        let a = gaussian_vector_mechanism(&[0.0; 3], 1.0, b, &mut l1, AccountId::MAIN, "y", &mut rng())
            .unwrap();
        let c = gaussian_vector_mechanism(&[0.0; 3], 1.0, b, &mut l2, AccountId::MAIN, "y", &mut rng())
            .unwrap();
        assert_eq!(a, c);
        assert_eq!(l1.spent(), 0.5);
        let again =
            gaussian_vector_mechanism(&[0.0; 3], 1.0, b, &mut l1, AccountId::MAIN, "y", &mut rng());
        assert!(again.is_ok());
        assert!(
            gaussian_vector_mechanism(&[0.0; 3], 1.0, b, &mut l1, AccountId::MAIN, "y", &mut rng())
                .is_err()
        );
    }

    #[test]
    fn variance_formula() {
        // Δ=2, ρ=0.5 → σ² = 4
        let s = gaussian_sigma(2.0, 0.5);
        assert!((s * s - 4.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mechanism_empirical_variance() {
        let mut ledger = Ledger::new(PrivacyBudget::new(1e9).unwrap());
        let b = PrivacyBudget::new(0.5).unwrap();
        let mut r = rng();
        let out =
            gaussian_vector_mechanism(&[0.0; 50_000], 2.0, b, &mut ledger, AccountId::MAIN, "y", &mut r)
                .unwrap();
        let var = out.iter().map(|x| x * x).sum::<f64>() / out.len() as f64;
        assert!((var - 4.0).abs() < 0.15, "var={var}");
    }

    #[test]
    fn symmetric_noise_shape() {
        assert_eq!(symmetric_gaussian_matrix(3, 0.0, &mut rng()), SquareMatrix::zeros(3));
        for seed in 0..20 {
            let mut r = stream(seed, StreamLabel::new(Purpose::Audit, 1, 0));
            let z = symmetric_gaussian_matrix(5, 1.3, &mut r);
            assert!(z.is_symmetric());
        }
    }

    #[test]
    fn symmetric_noise_offdiagonal_variance() {
        let mut r = rng();
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = symmetric_gaussian_matrix(2, 1.0, &mut r);
            sum += z.get(0, 1);
            sum_sq += z.get(0, 1) * z.get(0, 1);
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((0.95..=1.05).contains(&var), "var={var}");
    }

    #[test]
    fn zcdp_conversion_values() {
        assert_eq!(zcdp_to_dp(0.0, 0.1).unwrap(), 0.0);
        let eps = zcdp_to_dp(0.5, 1e-6).unwrap();
        assert!((eps - 5.756_521_769_756_932).abs() < 1e-12, "eps={eps}");
        assert!(zcdp_to_dp(1.0, 1e-6).unwrap() > eps);
        assert!(zcdp_to_dp(0.5, 1e-7).unwrap() > eps);
        assert_eq!(zcdp_to_dp(0.5, 1.0), Err(DpError::InvalidDelta(1.0)));
        assert_eq!(zcdp_to_dp(0.5, 0.0), Err(DpError::InvalidDelta(0.0)));
        assert!(zcdp_to_dp(-1.0, 0.5).is_err());
    }

    #[test]
    fn renyi_values() {
        assert_eq!(renyi_gaussian(0.3, 0.3, 2.0, 5.0).unwrap(), 0.0);
        assert_eq!(renyi_gaussian(1.0, 0.0, 1.0, 2.0).unwrap(), 1.0);
        let a = renyi_gaussian(0.7, -0.2, 1.5, 3.0).unwrap();
        let b = renyi_gaussian(1.4, -0.4, 6.0, 3.0).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert_eq!(renyi_gaussian(0.0, 1.0, 1.0, 1.0), Err(DpError::InvalidAlpha(1.0)));
        assert!(renyi_gaussian(0.0, 1.0, 0.0, 2.0).is_err());
    }
}
