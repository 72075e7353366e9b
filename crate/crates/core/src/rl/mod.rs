//! Private LSVI-UCB with a determinant-triggered, capped update schedule.
//!
//! The Gram matrix of each stage is released through a tree mechanism every
//! episode; the regression targets are rebuilt from the raw history and
//! released through the Gaussian mechanism only when an update fires. An
//! update fires when the determinant of some stage's noisy Gram matrix has
//! grown by a factor `C` since the last update, and recomputes every stage.

mod agent;
mod audit;
mod constants;

pub use agent::{PrivateLsviUcb, UpdateLog, UpdateRecord};
pub use audit::empirical_sensitivity_audit;
pub use constants::{
    DerivedConstants, GRAM_SENSITIVITY, RegretConstants, switching_cap, target_sensitivity,
};

use serde::{Deserialize, Serialize};

use crate::dp::DpError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaMode {
    Auto,
    Manual(f64),
}

/// How `λ̃_Λ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShiftMode {
    Auto,
    Manual(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub dim: usize,
    pub horizon: usize,
    pub episodes: usize,
    /// Total zCDP budget; zero runs the agent without noise.
    pub rho: f64,
    /// Determinant growth factor `C` that triggers an update.
    pub update_factor: f64,
    pub failure_prob: f64,
    pub beta: BetaMode,
    pub lambda_shift: ShiftMode,
    pub seed: u64,
}

impl AgentConfig {
    pub fn new(dim: usize, horizon: usize, episodes: usize, rho: f64, seed: u64) -> Self {
        Self {
            dim,
            horizon,
            episodes,
            rho,
            update_factor: 2.0,
            failure_prob: 0.05,
            beta: BetaMode::Auto,
            lambda_shift: ShiftMode::Auto,
            seed,
        }
    }

    pub fn is_private(&self) -> bool {
        self.rho > 0.0
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.dim == 0 || self.horizon == 0 || self.episodes == 0 {
            return Err(AgentError::Config("d, H and K must be positive"));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(AgentError::Config("rho must be finite and nonnegative"));
        }
        if !(self.update_factor > 1.0 && self.update_factor.is_finite()) {
            return Err(AgentError::Config("update factor C must exceed 1"));
        }
        if !(self.failure_prob > 0.0 && self.failure_prob < 1.0) {
            return Err(AgentError::Config("failure probability must lie in (0, 1)"));
        }
        if let BetaMode::Manual(b) = self.beta {
            if !(b.is_finite() && b >= 0.0) {
                return Err(AgentError::Config("manual beta must be finite and nonnegative"));
            }
        }
        if let ShiftMode::Manual(l) = self.lambda_shift {
            if !(l.is_finite() && l > 0.0) {
                return Err(AgentError::Config("manual lambda shift must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("episode {got} started out of order (expected {expected})")]
    EpisodeOutOfOrder { expected: usize, got: usize },
    #[error("episode {0} exceeds the configured number of episodes")]
    EpisodeOutOfRange(usize),
    #[error("episode {episode} has only {recorded} of its stages recorded")]
    IncompleteEpisode { episode: usize, recorded: usize },
    #[error("stage {h} of episode {episode} was already recorded")]
    DoubleRecord { episode: usize, h: usize },
    #[error("no episode in progress")]
    NoEpisode,
    #[error("feature table has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("stage {h} is out of range")]
    StageOutOfRange { h: usize },
    #[error("histories are not neighbors")]
    HistoriesNotNeighbors,
}
