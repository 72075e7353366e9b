use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BanditConfig, BanditError, TargetPrivacy, WidthParams, ucb_argmax};
use crate::dp::{
    AccountId, AdaptiveGaussianSchedule, ConcentrationParams, ElementKind, Ledger, PrivacyBudget,
    TreeAggregator, gaussian_sigma, matrix_opnorm_bound, tree_log_terms, vector_norm_bound,
};
use crate::linalg::{Determinant, GramSolver, SquareMatrix, norm2};
use crate::rng::{Purpose, StreamLabel, standard_normal, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditUpdate {
    /// 1-based round at whose start the update ran.
    pub round: usize,
    pub log_det: f64,
    pub beta: f64,
    pub rho_charged: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BanditLog {
    pub updates: Vec<BanditUpdate>,
    /// Rounds whose trigger arrived after the update cap was reached.
    pub suppressed: usize,
}

/// Slowly updating private LinUCB.
///
/// Each round calls [`choose`](Self::choose) and then
/// [`observe`](Self::observe) with the played action and its reward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlowDpUcb {
    config: BanditConfig,
    width: WidthParams,
    update_cap: usize,
    gram_tree: TreeAggregator,
    target_tree: Option<TreeAggregator>,
    targets: Option<AdaptiveGaussianSchedule>,
    target_sensitivity: f64,
    ledger: Ledger,
    gram_account: AccountId,
    target_account: AccountId,
    trees_charged: bool,
    target_sum: Vec<f64>,
    observed: usize,
    theta: Vec<f64>,
    beta: f64,
    gram: SquareMatrix,
    solver: GramSolver,
    reference: Option<Determinant>,
    log: BanditLog,
    max_gram_noise: f64,
    max_target_noise: f64,
    good_event: bool,
}

impl SlowDpUcb {
    pub fn new(config: BanditConfig) -> Result<Self, BanditError> {
        config.validate()?;
        let (d, horizon) = (config.dim, config.horizon);
        let private = config.is_private();
        let half = config.rho / 2.0;
        let m = tree_log_terms(horizon);
        let failure = config.delta / (2.0 * horizon as f64);
        let l = config.action_bound;
        let update_cap =
            libm::floor(d as f64 * libm::log(horizon as f64) / libm::log(config.update_factor)) as usize + 1;

        let gram_sigma = if private { gaussian_sigma(2.0 * l * l, half / m as f64) } else { 0.0 };
        let gram_tree = TreeAggregator::new(
            horizon,
            ElementKind::Matrix(d),
            gram_sigma,
            stream(config.seed, StreamLabel::new(Purpose::BanditGramTree, 0, 0)),
        )?;
        let gram_noise_bound = if private {
            matrix_opnorm_bound(&ConcentrationParams::new(d, gram_sigma, m, failure)?)
        } else {
            0.0
        };

        let target_sensitivity = 2.0 * l * config.reward_bound;
        let (target_tree, targets, target_noise_bound) = match (private, config.target_privacy) {
            (false, _) => (None, None, 0.0),
            (true, TargetPrivacy::PerUpdateGaussian) => {
                let schedule =
                    AdaptiveGaussianSchedule::uniform(PrivacyBudget::new(half)?, update_cap, target_sensitivity)?;
                let sigma = target_sensitivity * libm::sqrt(update_cap as f64 / config.rho);
                let bound = vector_norm_bound(&ConcentrationParams::new(d, sigma, 1, failure)?);
                (None, Some(schedule), bound)
            }
            (true, TargetPrivacy::Tree) => {
                let sigma = gaussian_sigma(target_sensitivity, half / m as f64);
                let tree = TreeAggregator::new(
                    horizon,
                    ElementKind::Vector(d),
                    sigma,
                    stream(config.seed, StreamLabel::new(Purpose::BanditTarget, 1, 0)),
                )?;
                let bound = vector_norm_bound(&ConcentrationParams::new(d, sigma, m, failure)?);
                (Some(tree), None, bound)
            }
        };

        let lambda_shift = config.lambda_shift.unwrap_or(gram_noise_bound);
        let width = WidthParams {
            dim: d,
            noise_scale: config.noise_scale,
            delta: config.delta,
            lambda: config.lambda,
            lambda_shift,
            param_bound: config.param_bound,
            gram_noise_bound,
            target_noise_bound,
        };
        let ledger = Ledger::with_accounts(PrivacyBudget::new(config.rho)?, &[("gram", half), ("target", half)])?;
        let gram_account = ledger.account("gram").expect("account exists");
        let target_account = ledger.account("target").expect("account exists");
        let gram = SquareMatrix::scaled_identity(d, config.lambda + lambda_shift);
        let solver = GramSolver::new(&gram);
        Ok(Self {
            width,
            update_cap,
            gram_tree,
            target_tree,
            targets,
            target_sensitivity,
            ledger,
            gram_account,
            target_account,
            trees_charged: false,
            target_sum: vec![0.0; d],
            observed: 0,
            theta: vec![0.0; d],
            beta: 0.0,
            gram,
            solver,
            reference: None,
            log: BanditLog::default(),
            max_gram_noise: 0.0,
            max_target_noise: 0.0,
            good_event: true,
            config,
        })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn width_params(&self) -> &WidthParams {
        &self.width
    }

    pub fn lambda_shift(&self) -> f64 {
        self.width.lambda_shift
    }

    /// `⌊d log_c T⌋ + 1`, counting the initial update.
    pub fn update_cap(&self) -> usize {
        self.update_cap
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn privacy_spent(&self) -> f64 {
        self.ledger.spent()
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Width frozen at the last update.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn update_log(&self) -> &BanditLog {
        &self.log
    }

    pub fn update_count(&self) -> usize {
        self.log.updates.len()
    }

    /// `Ṽ` as of the last update.
    pub fn policy_gram(&self) -> &SquareMatrix {
        &self.gram
    }

    pub fn max_gram_noise(&self) -> f64 {
        self.max_gram_noise
    }

    pub fn max_target_noise(&self) -> f64 {
        self.max_target_noise
    }

    /// All observed noise stayed within the bounds used in the width.
    pub fn good_event(&self) -> bool {
        self.good_event
    }

    /// `Ṽ_t` after `t` observations.
    pub fn gram_at(&self, t: usize) -> Result<SquareMatrix, BanditError> {
        self.check_round(t)?;
        let mut g = self.gram_tree.release_matrix(t)?;
        g.add_scaled_identity(self.config.lambda + self.width.lambda_shift);
        Ok(g)
    }

    pub fn current_gram(&self) -> Result<SquareMatrix, BanditError> {
        self.gram_at(self.observed)
    }

    /// Confidence width evaluated at `Ṽ_t`.
    pub fn confidence_width(&self, t: usize) -> Result<f64, BanditError> {
        let det = GramSolver::new(&self.gram_at(t)?).determinant();
        Ok(self.width.width(det.log))
    }

    fn check_round(&self, t: usize) -> Result<(), BanditError> {
        if t > self.observed {
            return Err(BanditError::RoundOutOfRange {
                requested: t,
                observed: self.observed,
            });
        }
        Ok(())
    }

    /// Picks an action for the next round, updating first if the
    /// determinant has grown by `c` and the cap allows it.
    pub fn choose(&mut self, set: &[Vec<f64>]) -> Result<usize, BanditError> {
        if set.is_empty() {
            return Err(BanditError::EmptyDecisionSet);
        }
        let d = self.config.dim;
        let bound = self.config.action_bound;
        for (index, x) in set.iter().enumerate() {
            if x.len() != d {
                return Err(BanditError::DimensionMismatch { expected: d, got: x.len() });
            }
            let norm = norm2(x);
            if norm > bound * (1.0 + 1e-12) {
                return Err(BanditError::ActionNormExceeded { index, norm, bound });
            }
        }
        let t = self.observed;
        if t >= self.config.horizon {
            return Err(BanditError::HorizonExceeded(self.config.horizon));
        }
        let gram = self.gram_at(t)?;
        if self.gram_tree.node_sigma() > 0.0 {
            let noise = SquareMatrix::from_row_major(d, self.gram_tree.release_noise(t)?);
            let norm = noise.sym_opnorm();
            self.max_gram_noise = self.max_gram_noise.max(norm);
            if norm > self.width.gram_noise_bound {
                self.good_event = false;
            }
        }
        let solver = GramSolver::new(&gram);
        let det = solver.determinant();
        let fires = match &self.reference {
            None => true,
            Some(r) => det.at_least(self.config.update_factor, r),
        };
        if fires {
            if self.log.updates.len() >= self.update_cap {
                self.log.suppressed += 1;
            } else {
                self.update(t, gram, solver, det)?;
            }
        }
        let solver = &self.solver;
        Ok(ucb_argmax(&self.theta, self.beta, |x| solver.inv_quad(x), set))
    }

    fn update(&mut self, t: usize, gram: SquareMatrix, solver: GramSolver, det: Determinant) -> Result<(), BanditError> {
        let d = self.config.dim;
        let mut rho_charged = 0.0;
        let (y, noise) = match (&self.target_tree, &mut self.targets) {
            (Some(tree), _) => (tree.release(t)?, Some(tree.release_noise(t)?)),
            (None, Some(schedule)) => {
                // Nothing is observed before the first round, so that release is free.
                let sensitivity = if t == 0 { 0.0 } else { self.target_sensitivity };
                let scale = schedule.next_release(sensitivity)?;
                let index = self.log.updates.len() as u64;
                self.ledger.charge(
                    self.target_account,
                    &format!("target t={}", t + 1),
                    scale.rho,
                    scale.sensitivity,
                )?;
                rho_charged = scale.rho;
                let mut rng = stream(self.config.seed, StreamLabel::new(Purpose::BanditTarget, 0, index));
                let noise: Vec<f64> = if scale.sigma > 0.0 {
                    (0..d).map(|_| scale.sigma * standard_normal(&mut rng)).collect()
                } else {
                    vec![0.0; d]
                };
                (self.target_sum.iter().zip(&noise).map(|(y, z)| y + z).collect(), Some(noise))
            }
            (None, None) => (self.target_sum.clone(), None),
        };
        if let Some(noise) = noise {
            self.note_target_noise(&noise);
        }
        self.theta = solver.solve(&y);
        self.beta = self.width.width(det.log);
        self.gram = gram;
        self.solver = solver;
        self.reference = Some(det);
        self.log.updates.push(BanditUpdate {
            round: t + 1,
            log_det: det.log,
            beta: self.beta,
            rho_charged,
        });
        Ok(())
    }

    fn note_target_noise(&mut self, noise: &[f64]) {
        let norm = norm2(noise);
        self.max_target_noise = self.max_target_noise.max(norm);
        if norm > self.width.target_noise_bound {
            self.good_event = false;
        }
    }

    /// Records the played action and its reward.
    pub fn observe(&mut self, action: &[f64], reward: f64) -> Result<(), BanditError> {
        let d = self.config.dim;
        if action.len() != d {
            return Err(BanditError::DimensionMismatch { expected: d, got: action.len() });
        }
        if self.observed >= self.config.horizon {
            return Err(BanditError::HorizonExceeded(self.config.horizon));
        }
        if self.config.is_private() && !self.trees_charged {
            let l = self.config.action_bound;
            let half = self.config.rho / 2.0;
            self.ledger.charge(self.gram_account, "gram tree", half, 2.0 * l * l)?;
            if self.target_tree.is_some() {
                self.ledger.charge(self.target_account, "target tree", half, self.target_sensitivity)?;
            }
            self.trees_charged = true;
        }
        self.gram_tree.feed(SquareMatrix::outer(action).as_slice())?;
        let item: Vec<f64> = action.iter().map(|a| a * reward).collect();
        if let Some(tree) = &mut self.target_tree {
            tree.feed(&item)?;
        }
        for (y, v) in self.target_sum.iter_mut().zip(&item) {
            *y += v;
        }
        self.observed += 1;
        Ok(())
    }
}
