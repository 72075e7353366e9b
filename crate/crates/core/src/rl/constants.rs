use serde::{Deserialize, Serialize};

use super::{AgentConfig, BetaMode, ShiftMode};
use crate::dp::{
    ConcentrationParams, even_share, gaussian_sigma, matrix_opnorm_bound, tree_log_terms,
    utility_lambda_shift, vector_norm_bound,
};

/// Per-swap operator-norm sensitivity of a Gram-matrix increment `φφᵀ`.
pub const GRAM_SENSITIVITY: f64 = 2.0;

/// ℓ₂ sensitivity of one stage's regression target. Values are clipped to
/// `[0, H]`, so a swapped episode moves `Σ φ (r + V)` by at most `2 + 2H`.
/// For `H ≥ 2` this is dominated by `3H`.
pub fn target_sensitivity(horizon: usize) -> f64 {
    let h = horizon as f64;
    (3.0 * h).max(2.0 * h + 2.0)
}

/// `⌈(dH / ln 2) · ln(1 + K / (λ̃_Λ d))⌉`.
pub fn switching_cap(dim: usize, horizon: usize, episodes: usize, lambda_shift: f64) -> usize {
    let d = dim as f64;
    let bound = d * horizon as f64 / core::f64::consts::LN_2
        * libm::log1p(episodes as f64 / (lambda_shift * d));
    libm::ceil(bound) as usize
}

/// `U_K`, `χ` and `β` from the two noise shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretConstants {
    pub u_k: f64,
    pub chi: f64,
    pub beta: f64,
}

impl RegretConstants {
    pub fn from_shifts(
        dim: usize,
        horizon: usize,
        episodes: usize,
        failure_prob: f64,
        lambda_shift: f64,
        lambda_y: f64,
    ) -> Self {
        let (d, h, k) = (dim as f64, horizon as f64, episodes as f64);
        let u_k = (2.0 * h * libm::sqrt(d * k / lambda_shift) + lambda_y / lambda_shift).max(1.0);
        let chi = 390_625.0 * 162.0 * (k * k) * (k * k) * d * u_k * h / failure_prob;
        let log_chi = libm::log(chi);
        let beta = 5.0 * h * h * libm::sqrt(d * lambda_shift * log_chi) + 6.0 * d * h * libm::sqrt(log_chi);
        Self { u_k, chi, beta }
    }
}

/// Everything the agent derives from its configuration before the first
/// episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `λ̃_Λ`: the Gram matrix is shifted by `2λ̃_Λ I`.
    pub lambda_shift: f64,
    /// `λ̃_y`: high-probability bound on the target noise norm.
    pub lambda_y: f64,
    pub u_k: f64,
    pub chi: f64,
    /// Bonus multiplier actually used (auto or manual).
    pub beta: f64,
    pub n_max: usize,
    /// Nodes per item in each Gram tree.
    pub log_terms: usize,
    pub node_sigma: f64,
    /// zCDP charged to each stage's Gram tree.
    pub tree_rho: f64,
    pub target_sensitivity: f64,
    /// Noise scale of one target release.
    pub target_sigma: f64,
}

impl DerivedConstants {
    pub fn new(config: &AgentConfig) -> Self {
        let (d, h, k, p) = (config.dim, config.horizon, config.episodes, config.failure_prob);
        let log_terms = tree_log_terms(k);
        let delta_y = target_sensitivity(h);
        let private = config.is_private();
        let tree_rho = if private { even_share(config.rho / 2.0, h) } else { 0.0 };
        let node_sigma = if private {
            gaussian_sigma(GRAM_SENSITIVITY, tree_rho / log_terms as f64)
        } else {
            0.0
        };
        // stage-level failure probability shared by the K·H releases and the two mechanisms
        let per_release = p / (3.0 * k as f64 * h as f64);
        let lambda_shift = match config.lambda_shift {
            ShiftMode::Manual(v) => v,
            ShiftMode::Auto if !private => 1.0,
            ShiftMode::Auto => {
                let params = ConcentrationParams::new(d, node_sigma, log_terms, per_release)
                    .expect("validated configuration");
                utility_lambda_shift(d, h, k, config.rho, p).max(matrix_opnorm_bound(&params))
            }
        };
        let n_max = switching_cap(d, h, k, lambda_shift).max(1);
        let (target_sigma, lambda_y) = if private {
            let sigma = delta_y * libm::sqrt(h as f64 * n_max as f64 / config.rho);
            let params =
                ConcentrationParams::new(d, sigma, 1, per_release).expect("validated configuration");
            (sigma, vector_norm_bound(&params))
        } else {
            (0.0, 0.0)
        };
        let rc = RegretConstants::from_shifts(d, h, k, p, lambda_shift, lambda_y);
        let beta = match config.beta {
            BetaMode::Auto => rc.beta,
            BetaMode::Manual(b) => b,
        };
        Self {
            lambda_shift,
            lambda_y,
            u_k: rc.u_k,
            chi: rc.chi,
            beta,
            n_max,
            log_terms,
            node_sigma,
            tree_rho,
            target_sensitivity: delta_y,
            target_sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switching_cap_example() {
        assert_eq!(switching_cap(4, 3, 1024, 1.0), 97);
    }

    #[test]
    fn target_sensitivity_covers_two_plus_two_h() {
        assert_eq!(target_sensitivity(1), 4.0);
        assert_eq!(target_sensitivity(2), 6.0);
        assert_eq!(target_sensitivity(5), 15.0);
    }

    #[test]
    fn non_private_beta_reduces() {
        let c = DerivedConstants::new(&AgentConfig::new(3, 2, 100, 0.0, 1));
        assert_eq!(c.lambda_shift, 1.0);
        assert_eq!(c.lambda_y, 0.0);
        assert_eq!(c.node_sigma, 0.0);
        let lc = libm::log(c.chi);
        let expect = 5.0 * 4.0 * libm::sqrt(3.0 * lc) + 6.0 * 3.0 * 2.0 * libm::sqrt(lc);
        assert!((c.beta - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn beta_increasing_in_episodes() {
        let mut last = 0.0;
        for k in [1, 2, 10, 100, 1000, 10_000] {
            let b = RegretConstants::from_shifts(4, 3, k, 0.05, 1.0, 0.0).beta;
            assert!(b > last);
            last = b;
        }
    }

    #[test]
    fn private_constants_positive() {
        let c = DerivedConstants::new(&AgentConfig::new(4, 3, 1024, 1.0, 1));
        for v in [c.lambda_shift, c.lambda_y, c.u_k, c.chi, c.beta, c.node_sigma, c.target_sigma] {
            assert!(v > 0.0 && v.is_finite());
        }
        assert!(c.n_max >= 1);
        // node variance Δ²·m·H/ρ up to the ulp-level share rounding
        let expect = 4.0 * c.log_terms as f64 * 3.0 / 1.0;
        assert!((c.node_sigma * c.node_sigma / expect - 1.0).abs() < 1e-12);
        let tighter = DerivedConstants::new(&AgentConfig::new(4, 3, 1024, 100.0, 1));
        assert!(tighter.lambda_shift < c.lambda_shift);
    }

    #[test]
    fn single_episode_shift_is_positive() {
        let c = DerivedConstants::new(&AgentConfig::new(2, 2, 1, 1.0, 1));
        assert!(c.lambda_shift > 0.0);
    }
}
