//! Jointly differentially private episodic RL in linear MDPs.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It contains:
//!
//! - [`dp`]: zCDP accounting, Gaussian mechanisms, the tree-based streaming
//!   prefix-sum releaser and the concentration bounds used to size the noise
//!   shifts.
//! - [`mdp`]: finite-latent-state linear MDPs, episode simulation and exact
//!   dynamic-programming oracles.
//! - [`rl`]: private LSVI-UCB with a determinant-triggered, capped update
//!   schedule.
//! - [`bandit`]: the slowly updating private linear UCB bandit.
//! - [`linalg`]: the small dense linear algebra the agents need.
//!
//! All randomness flows through [`rng`], which derives independent ChaCha
//! streams from one root seed and a label.

#![no_std]

extern crate alloc;

pub mod bandit;
pub mod dp;
pub mod linalg;
pub mod mdp;
pub mod rl;
pub mod rng;

pub use bandit::{BanditConfig, BanditError, SlowDpUcb, TargetPrivacy, WidthParams};
pub use dp::{
    AccountId, AdaptiveGaussianSchedule, ConcentrationParams, DpError, ElementKind, Ledger,
    LedgerEntry, PrivacyBudget, TreeAggregator,
};
pub use linalg::SquareMatrix;
pub use mdp::{EpisodeTrace, FeatureTable, LinearMdp, MdpError, OracleValues};
pub use rl::{AgentConfig, AgentError, BetaMode, DerivedConstants, PrivateLsviUcb, ShiftMode};
