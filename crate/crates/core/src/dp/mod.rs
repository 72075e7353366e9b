//! Privacy primitives: zCDP budgets and ledgers, Gaussian mechanisms, the
//! binary-tree streaming releaser and the concentration bounds used to shift
//! noisy Gram matrices.

mod adaptive;
mod budget;
mod bounds;
mod mechanism;
mod tree;

pub use adaptive::{AdaptiveGaussianSchedule, ReleaseScale, adaptive_release_schedule};
pub use budget::{AccountId, Ledger, LedgerEntry, PrivacyBudget, even_share};
pub use bounds::{
    ConcentrationParams, matrix_opnorm_bound, tree_log_terms, utility_lambda_shift,
    vector_norm_bound,
};
pub use mechanism::{
    gaussian_sigma, gaussian_vector_mechanism, renyi_gaussian, symmetric_gaussian_matrix,
    zcdp_to_dp,
};
pub use tree::{ElementKind, NodeId, TreeAggregator, dyadic_decomposition};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DpError {
    #[error("privacy budget must be a finite nonnegative number, got {0}")]
    InvalidBudget(f64),
    #[error("a positive budget is required to release a value with nonzero sensitivity")]
    NonpositiveBudget,
    #[error("budget exhausted on account `{account}`: requested {requested}, remaining {remaining}")]
    BudgetExhausted {
        account: String,
        requested: f64,
        remaining: f64,
    },
    #[error("account caps sum to {caps}, exceeding the total budget {total}")]
    CapsExceedTotal { caps: f64, total: f64 },
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("Renyi order must exceed 1, got {0}")]
    InvalidAlpha(f64),
    #[error("variance must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("sensitivity must be finite and nonnegative, got {0}")]
    InvalidSensitivity(f64),
    #[error("invalid concentration parameters: {0}")]
    InvalidParams(&'static str),
    #[error("prefix {requested} is out of range (fed {fed}, horizon {horizon})")]
    OutOfRange {
        requested: usize,
        fed: usize,
        horizon: usize,
    },
    #[error("stream horizon {0} exceeded")]
    HorizonExceeded(usize),
    #[error("element has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint sensitivity {declared} exceeded (requested total {requested})")]
    JointSensitivityExceeded { declared: f64, requested: f64 },
}
