//! Slowly updating private linear UCB for stochastic linear bandits.
//!
//! `Ṽ_t` is the tree-released Gram matrix of the played actions plus
//! `(λ + λ̃) I`. The ridge estimate and its confidence width are recomputed
//! only when `det Ṽ_t` has grown by a factor `c` since the last update.

mod agent;

pub use agent::{BanditLog, BanditUpdate, SlowDpUcb};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dp::DpError;
use crate::linalg::dot;

/// How the target vector `Σ a_t r_t` is privatized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetPrivacy {
    /// A fresh Gaussian release at each update.
    PerUpdateGaussian,
    /// A second tree mechanism over `a_t r_t`.
    Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub dim: usize,
    pub horizon: usize,
    /// Total zCDP budget; zero disables all noise.
    pub rho: f64,
    /// Determinant growth factor `c`.
    pub update_factor: f64,
    /// Ridge parameter `λ`.
    pub lambda: f64,
    /// Noise shift `λ̃`; `None` uses the Gram-noise bound.
    pub lambda_shift: Option<f64>,
    /// `S ≥ ‖θ*‖₂`.
    pub param_bound: f64,
    /// `L ≥ ‖a‖₂` for every action.
    pub action_bound: f64,
    /// `|r_t| ≤ B`, used only to size the target sensitivity.
    pub reward_bound: f64,
    /// Sub-Gaussian scale `R` of the reward noise.
    pub noise_scale: f64,
    pub delta: f64,
    pub target_privacy: TargetPrivacy,
    pub seed: u64,
}

impl BanditConfig {
    pub fn new(dim: usize, horizon: usize, rho: f64, seed: u64) -> Self {
        Self {
            dim,
            horizon,
            rho,
            update_factor: 2.0,
            lambda: 1.0,
            lambda_shift: None,
            param_bound: 1.0,
            action_bound: 1.0,
            reward_bound: 2.0,
            noise_scale: 0.1,
            delta: 0.05,
            target_privacy: TargetPrivacy::PerUpdateGaussian,
            seed,
        }
    }

    pub fn is_private(&self) -> bool {
        self.rho > 0.0
    }

    pub fn validate(&self) -> Result<(), BanditError> {
        if self.dim == 0 || self.horizon == 0 {
            return Err(BanditError::Config("d and T must be positive"));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(BanditError::Config("rho must be finite and nonnegative"));
        }
        if !(self.update_factor > 1.0 && self.update_factor.is_finite()) {
            return Err(BanditError::Config("update factor c must exceed 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(BanditError::Config("lambda must be finite and nonnegative"));
        }
        if let Some(s) = self.lambda_shift {
            if !(s.is_finite() && s >= 0.0) {
                return Err(BanditError::Config("lambda shift must be finite and nonnegative"));
            }
        }
        if self.is_private() && self.lambda <= 0.0 {
            return Err(BanditError::Config("private runs need a positive ridge parameter"));
        }
        for v in [self.param_bound, self.action_bound, self.reward_bound] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BanditError::Config("bounds S, L and B must be positive"));
            }
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(BanditError::Config("noise scale must be nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BanditError::Config("delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BanditError {
    #[error("invalid bandit configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("decision set is empty")]
    EmptyDecisionSet,
    #[error("action {index} has norm {norm}, above the bound {bound}")]
    ActionNormExceeded { index: usize, norm: f64, bound: f64 },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("horizon {0} exceeded")]
    HorizonExceeded(usize),
    #[error("round {requested} is beyond the {observed} observed rounds")]
    RoundOutOfRange { requested: usize, observed: usize },
}

/// Inputs of the private confidence width
///
/// `β = R √(2 (½ log det Ṽ − ½ d log(λ + λ̃) + log(1/δ))) + √(λ + λ̃) S
///      + (S ‖H‖ + ‖h‖) / √λ`,
///
/// where `‖H‖` and `‖h‖` are high-probability bounds on the Gram and target
/// noise. The logarithm's argument is clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthParams {
    pub dim: usize,
    pub noise_scale: f64,
    pub delta: f64,
    pub lambda: f64,
    pub lambda_shift: f64,
    pub param_bound: f64,
    pub gram_noise_bound: f64,
    pub target_noise_bound: f64,
}

impl WidthParams {
    pub fn width(&self, log_det: f64) -> f64 {
        let shifted = self.lambda + self.lambda_shift;
        let inner = 0.5 * log_det - 0.5 * self.dim as f64 * libm::log(shifted) + libm::log(1.0 / self.delta);
        let noise = self.param_bound * self.gram_noise_bound + self.target_noise_bound;
        let noise_term = if noise == 0.0 { 0.0 } else { noise / libm::sqrt(self.lambda) };
        self.noise_scale * libm::sqrt(2.0 * inner.max(0.0))
            + libm::sqrt(shifted) * self.param_bound
            + noise_term
    }
}

/// Width in terms of the spectral bounds on the regularizer `H_t`:
/// `σ √(2 log(2/α) + log det V − d log ρ_min) + S √ρ_max + γ`.
#[allow(clippy::too_many_arguments)]
pub fn spectral_confidence_width(
    sigma: f64,
    alpha: f64,
    log_det: f64,
    dim: usize,
    rho_min: f64,
    rho_max: f64,
    param_bound: f64,
    gamma: f64,
) -> f64 {
    let inner = 2.0 * libm::log(2.0 / alpha) + log_det - dim as f64 * libm::log(rho_min);
    sigma * libm::sqrt(inner.max(0.0)) + param_bound * libm::sqrt(rho_max) + gamma
}

/// `2 β_T √(2 c T (d log((2dλ + T L²)/d) − d log λ))`.
pub fn generic_regret_bound(
    beta_t: f64,
    update_factor: f64,
    rounds: usize,
    dim: usize,
    lambda: f64,
    action_bound: f64,
) -> f64 {
    let (t, d) = (rounds as f64, dim as f64);
    let log_term = d * libm::log((2.0 * d * lambda + t * action_bound * action_bound) / d) - d * libm::log(lambda);
    2.0 * beta_t * libm::sqrt(2.0 * update_factor * t * log_term.max(0.0))
}

/// `d log_c T`: the trigger bound, not counting the initial update.
pub fn trigger_bound(dim: usize, update_factor: f64, horizon: usize) -> f64 {
    dim as f64 * libm::log(horizon as f64) / libm::log(update_factor)
}

/// Cumulative pseudo-regret `Σ_t max_{x∈X_t} ⟨x, θ*⟩ − ⟨x_t, θ*⟩`.
pub fn pseudo_regret(theta_star: &[f64], decision_sets: &[Vec<Vec<f64>>], actions: &[usize]) -> Vec<f64> {
    assert_eq!(decision_sets.len(), actions.len(), "one action per round");
    let mut total = 0.0;
    decision_sets
        .iter()
        .zip(actions)
        .map(|(set, &i)| {
            let best = set
                .iter()
                .map(|x| dot(x, theta_star))
                .fold(f64::NEG_INFINITY, f64::max);
            total += best - dot(&set[i], theta_star);
            total
        })
        .collect()
}

/// `argmax_i ⟨θ, x_i⟩ + β ‖x_i‖_{Ṽ⁻¹}` with ties to the lowest index, given
/// `inv_quad(x) = xᵀ Ṽ⁻¹ x`.
pub fn ucb_argmax<F: Fn(&[f64]) -> f64>(theta: &[f64], beta: f64, inv_quad: F, set: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, x) in set.iter().enumerate() {
        let v = dot(theta, x) + beta * libm::sqrt(inv_quad(x).max(0.0));
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}
