use serde::{Deserialize, Serialize};

use super::DpError;

/// Inputs to the high-probability noise-norm bounds: the sum of `log_terms`
/// independent Gaussian draws of dimension `dim` with per-coordinate scale
/// `sigma`, bounded with failure probability `failure_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    pub dim: usize,
    pub sigma: f64,
    pub log_terms: usize,
    pub failure_prob: f64,
}

impl ConcentrationParams {
    pub fn new(dim: usize, sigma: f64, log_terms: usize, failure_prob: f64) -> Result<Self, DpError> {
        if dim == 0 {
            return Err(DpError::InvalidParams("dimension must be positive"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(DpError::InvalidParams("sigma must be finite and nonnegative"));
        }
        if log_terms == 0 {
            return Err(DpError::InvalidParams("at least one noise term is required"));
        }
        if !(failure_prob > 0.0 && failure_prob < 1.0) {
            return Err(DpError::InvalidParams("failure probability must lie in (0, 1)"));
        }
        Ok(Self {
            dim,
            sigma,
            log_terms,
            failure_prob,
        })
    }

    fn scale(&self) -> f64 {
        self.sigma * libm::sqrt(self.log_terms as f64)
    }

    fn log_inv_failure(&self) -> f64 {
        libm::log(1.0 / self.failure_prob)
    }
}

/// `σ√m (4√(d+1) + 2 ln(1/β′))`: operator-norm bound on a sum of `m`
/// symmetric Gaussian noise matrices.
pub fn matrix_opnorm_bound(p: &ConcentrationParams) -> f64 {
    p.scale() * (4.0 * libm::sqrt(p.dim as f64 + 1.0) + 2.0 * p.log_inv_failure())
}

/// `σ√m (√d + √(2 ln(1/β′)))`: ℓ₂ bound on a sum of `m` Gaussian vectors.
pub fn vector_norm_bound(p: &ConcentrationParams) -> f64 {
    p.scale() * (libm::sqrt(p.dim as f64) + libm::sqrt(2.0 * p.log_inv_failure()))
}

/// Operator-norm bound on the Gram-matrix noise of the private LSVI-UCB
/// agent over `episodes` episodes and `horizon` stages:
/// `16√H ln(K) (4√(d+1) + 2 ln(KH/p)) / √(2ρ)`.
pub fn utility_lambda_shift(dim: usize, horizon: usize, episodes: usize, rho: f64, failure_prob: f64) -> f64 {
    let h = horizon as f64;
    let k = episodes as f64;
    16.0 * libm::sqrt(h)
        * libm::log(k)
        * (4.0 * libm::sqrt(dim as f64 + 1.0) + 2.0 * libm::log(k * h / failure_prob))
        / libm::sqrt(2.0 * rho)
}

/// `⌈log₂ T⌉ + 1`: the number of tree nodes any single item belongs to.
pub fn tree_log_terms(horizon: usize) -> usize {
    horizon.max(1).next_power_of_two().trailing_zeros() as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_values() {
        let p = ConcentrationParams::new(3, 1.0, 1, libm::exp(-1.0)).unwrap();
        assert!((matrix_opnorm_bound(&p) - 10.0).abs() < 1e-12);
        let p = ConcentrationParams::new(4, 1.0, 1, libm::exp(-2.0)).unwrap();
        assert!((vector_norm_bound(&p) - 4.0).abs() < 1e-12);
        let z = ConcentrationParams::new(4, 0.0, 3, 0.1).unwrap();
        assert_eq!(matrix_opnorm_bound(&z), 0.0);
        assert_eq!(vector_norm_bound(&z), 0.0);
    }

    #[test]
    fn monotone_in_sigma_terms_and_failure_prob() {
        let base = ConcentrationParams::new(4, 1.0, 3, 0.05).unwrap();
        for f in [matrix_opnorm_bound, vector_norm_bound] {
            let b = f(&base);
            assert!(f(&ConcentrationParams { sigma: 1.5, ..base }) > b);
            assert!(f(&ConcentrationParams { log_terms: 4, ..base }) > b);
            assert!(f(&ConcentrationParams { failure_prob: 0.01, ..base }) > b);
            assert!(f(&ConcentrationParams { failure_prob: 0.2, ..base }) < b);
        }
    }

    #[test]
    fn invalid_params() {
        assert!(ConcentrationParams::new(0, 1.0, 1, 0.1).is_err());
        assert!(ConcentrationParams::new(2, -1.0, 1, 0.1).is_err());
        assert!(ConcentrationParams::new(2, 1.0, 0, 0.1).is_err());
        assert!(ConcentrationParams::new(2, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn log_terms() {
        assert_eq!(tree_log_terms(1), 1);
        assert_eq!(tree_log_terms(2), 2);
        assert_eq!(tree_log_terms(5), 4);
        assert_eq!(tree_log_terms(8), 4);
        assert_eq!(tree_log_terms(1024), 11);
    }

    #[test]
    fn utility_shift_decreases_with_budget() {
        let a = utility_lambda_shift(4, 3, 1024, 1.0, 0.05);
        let b = utility_lambda_shift(4, 3, 1024, 4.0, 0.05);
        assert!((a / b - 2.0).abs() < 1e-12);
        assert_eq!(utility_lambda_shift(4, 3, 1, 1.0, 0.05), 0.0);
    }
}
