use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AgentConfig, AgentError, DerivedConstants};
use crate::dp::{
    AccountId, AdaptiveGaussianSchedule, ElementKind, Ledger, PrivacyBudget, TreeAggregator,
};
use crate::linalg::{Determinant, GramSolver, SquareMatrix, dot, norm2};
use crate::mdp::{EpisodeTrace, FeatureTable, Step};
use crate::rng::{Purpose, StreamLabel, standard_normal, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    /// 1-based episode at whose start the update ran.
    pub episode: usize,
    /// Stages whose determinant crossed the threshold.
    pub triggered: Vec<usize>,
    /// `log det Λ̃_h` per stage at this update.
    pub log_dets: Vec<f64>,
    /// Growth of `log det Λ̃_h` since the previous update (since `2λ̃_Λ I`
    /// for the first one).
    pub log_det_growth: Vec<f64>,
    pub rho_charged: f64,
    /// All stages factorized as positive definite.
    pub factorized: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub updates: Vec<UpdateRecord>,
    /// Triggers that arrived after the update cap was reached.
    pub suppressed: usize,
}

/// Private LSVI-UCB. Episodes are 1-based, stages 0-based.
///
/// Call [`begin_episode`](Self::begin_episode), act with the frozen policy,
/// then record every stage of the episode before starting the next one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivateLsviUcb {
    config: AgentConfig,
    constants: DerivedConstants,
    features: FeatureTable,
    trees: Vec<TreeAggregator>,
    ledger: Ledger,
    binary: AccountId,
    gaussian: AccountId,
    /// Each tree's whole share is charged when it receives its first item.
    tree_charged: Vec<bool>,
    targets: AdaptiveGaussianSchedule,
    history: Vec<Vec<Step>>,
    weights: Vec<Vec<f64>>,
    grams: Vec<SquareMatrix>,
    solvers: Vec<GramSolver>,
    reference: Vec<Option<Determinant>>,
    log: UpdateLog,
    episode: usize,
    recorded: Vec<bool>,
    max_gram_noise: f64,
    max_target_noise: f64,
    good_event: bool,
    factorization_ok: bool,
}

impl PrivateLsviUcb {
    pub fn new(config: AgentConfig, features: FeatureTable) -> Result<Self, AgentError> {
        config.validate()?;
        if features.dim() != config.dim {
            return Err(AgentError::DimensionMismatch {
                expected: config.dim,
                got: features.dim(),
            });
        }
        let constants = DerivedConstants::new(&config);
        let (d, h_max) = (config.dim, config.horizon);
        let half = config.rho / 2.0;
        let total = PrivacyBudget::new(config.rho)?;
        let ledger = Ledger::with_accounts(total, &[("binary", half), ("gaussian", half)])?;
        let binary = ledger.account("binary").expect("account exists");
        let gaussian = ledger.account("gaussian").expect("account exists");

        let mut trees = Vec::with_capacity(h_max);
        for h in 0..h_max {
            let rng = stream(config.seed, StreamLabel::new(Purpose::GramTree, h as u64, 0));
            trees.push(TreeAggregator::new(
                config.episodes,
                ElementKind::Matrix(d),
                constants.node_sigma,
                rng,
            )?);
        }
        let targets = AdaptiveGaussianSchedule::uniform(
            PrivacyBudget::new(half)?,
            h_max * constants.n_max,
            constants.target_sensitivity,
        )?;
        let initial = SquareMatrix::scaled_identity(d, 2.0 * constants.lambda_shift);
        let solver = GramSolver::new(&initial);
        Ok(Self {
            trees,
            ledger,
            binary,
            gaussian,
            tree_charged: vec![false; h_max],
            targets,
            history: vec![Vec::new(); h_max],
            weights: vec![vec![0.0; d]; h_max],
            grams: vec![initial; h_max],
            solvers: vec![solver; h_max],
            reference: vec![None; h_max],
            log: UpdateLog::default(),
            episode: 0,
            recorded: vec![false; h_max],
            max_gram_noise: 0.0,
            max_target_noise: 0.0,
            good_event: true,
            factorization_ok: true,
            config,
            constants,
            features,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.constants
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn binary_spent(&self) -> f64 {
        self.ledger.spent_in(self.binary)
    }

    pub fn gaussian_spent(&self) -> f64 {
        self.ledger.spent_in(self.gaussian)
    }

    pub fn privacy_spent(&self) -> f64 {
        self.ledger.spent()
    }

    pub fn switching_count(&self) -> usize {
        self.log.updates.len()
    }

    pub fn update_log(&self) -> &UpdateLog {
        &self.log
    }

    /// Last episode started (0 before the first).
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn weights(&self, h: usize) -> &[f64] {
        &self.weights[h]
    }

    /// `Λ̃_h` as of the last update; the current policy uses it.
    pub fn policy_gram(&self, h: usize) -> &SquareMatrix {
        &self.grams[h]
    }

    pub fn history_len(&self) -> usize {
        self.history.iter().map(Vec::len).sum()
    }

    /// Largest `‖M_h^k‖_op` seen at any episode start.
    pub fn max_gram_noise(&self) -> f64 {
        self.max_gram_noise
    }

    /// Largest target-noise norm released so far.
    pub fn max_target_noise(&self) -> f64 {
        self.max_target_noise
    }

    /// All observed noise stayed within `λ̃_Λ` and `λ̃_y`.
    pub fn good_event(&self) -> bool {
        self.good_event
    }

    /// Every update factorized its Gram matrices without falling back.
    pub fn factorization_ok(&self) -> bool {
        self.factorization_ok
    }

    /// The noisy Gram matrix over all recorded episodes:
    /// tree prefix plus `2λ̃_Λ I`.
    pub fn current_gram(&self, h: usize) -> Result<SquareMatrix, AgentError> {
        let tree = self.trees.get(h).ok_or(AgentError::StageOutOfRange { h })?;
        self.gram_at(h, tree.count())
    }

    fn gram_at(&self, h: usize, t: usize) -> Result<SquareMatrix, AgentError> {
        let mut g = self.trees[h].release_matrix(t)?;
        g.add_scaled_identity(2.0 * self.constants.lambda_shift);
        Ok(g)
    }

    /// Starts episode `k`, updating the policy if a determinant trigger
    /// fires and the update cap allows it. Returns whether it updated.
    pub fn begin_episode(&mut self, k: usize) -> Result<bool, AgentError> {
        if k != self.episode + 1 {
            return Err(AgentError::EpisodeOutOfOrder {
                expected: self.episode + 1,
                got: k,
            });
        }
        if k > self.config.episodes {
            return Err(AgentError::EpisodeOutOfRange(k));
        }
        let recorded = self.recorded.iter().filter(|&&r| r).count();
        if self.episode > 0 && recorded < self.config.horizon {
            return Err(AgentError::IncompleteEpisode {
                episode: self.episode,
                recorded,
            });
        }
        self.episode = k;
        self.recorded.iter_mut().for_each(|r| *r = false);

        let h_max = self.config.horizon;
        let mut grams = Vec::with_capacity(h_max);
        let mut solvers = Vec::with_capacity(h_max);
        let mut dets = Vec::with_capacity(h_max);
        let mut triggered = Vec::new();
        for h in 0..h_max {
            let g = self.gram_at(h, k - 1)?;
            if self.constants.node_sigma > 0.0 {
                let noise = SquareMatrix::from_row_major(self.config.dim, self.trees[h].release_noise(k - 1)?);
                let norm = noise.sym_opnorm();
                self.max_gram_noise = self.max_gram_noise.max(norm);
                if norm > self.constants.lambda_shift {
                    self.good_event = false;
                }
            }
            let solver = GramSolver::new(&g);
            let det = solver.determinant();
            let fires = match &self.reference[h] {
                None => true,
                Some(r) => det.at_least(self.config.update_factor, r),
            };
            if fires {
                triggered.push(h);
            }
            grams.push(g);
            solvers.push(solver);
            dets.push(det);
        }
        if triggered.is_empty() {
            return Ok(false);
        }
        if self.log.updates.len() >= self.constants.n_max {
            self.log.suppressed += 1;
            return Ok(false);
        }
        self.update(k, grams, solvers, dets, triggered)?;
        Ok(true)
    }

    fn update(
        &mut self,
        k: usize,
        grams: Vec<SquareMatrix>,
        solvers: Vec<GramSolver>,
        dets: Vec<Determinant>,
        triggered: Vec<usize>,
    ) -> Result<(), AgentError> {
        let (d, h_max) = (self.config.dim, self.config.horizon);
        let index = self.log.updates.len() as u64;
        let factorized = solvers.iter().all(GramSolver::is_factorized);
        let initial_log = Determinant::of_scaled_identity(d, 2.0 * self.constants.lambda_shift).log;
        let log_det_growth = dets
            .iter()
            .zip(&self.reference)
            .map(|(det, r)| det.log - r.map_or(initial_log, |r| r.log))
            .collect();
        let log_dets = dets.iter().map(|det| det.log).collect();
        let mut rho_charged = 0.0;

        for (h, (gram, solver)) in grams.into_iter().zip(solvers).enumerate().rev() {
            self.grams[h] = gram;
            self.solvers[h] = solver;
            let next_values: Vec<f64> = if h + 1 < h_max {
                (0..self.features.states()).map(|x| self.value(x, h + 1)).collect()
            } else {
                vec![0.0; self.features.states()]
            };
            let mut y = vec![0.0; d];
            for step in &self.history[h] {
                let target = step.reward + next_values[step.next_state];
                for (yi, f) in y.iter_mut().zip(self.features.get(step.state, step.action)) {
                    *yi += f * target;
                }
            }
            if self.config.is_private() {
                let scale = self.targets.next_release(self.constants.target_sensitivity)?;
                self.ledger.charge(
                    self.gaussian,
                    &format!("target h={h} k={k}"),
                    scale.rho,
                    scale.sensitivity,
                )?;
                rho_charged += scale.rho;
                let mut rng = stream(self.config.seed, StreamLabel::new(Purpose::TargetRelease, h as u64, index));
                let noise: Vec<f64> = (0..d).map(|_| scale.sigma * standard_normal(&mut rng)).collect();
                let norm = norm2(&noise);
                self.max_target_noise = self.max_target_noise.max(norm);
                if norm > self.constants.lambda_y {
                    self.good_event = false;
                }
                for (yi, z) in y.iter_mut().zip(&noise) {
                    *yi += z;
                }
            }
            self.weights[h] = self.solvers[h].solve(&y);
        }
        for (r, det) in self.reference.iter_mut().zip(dets) {
            *r = Some(det);
        }
        self.factorization_ok &= factorized;
        self.log.updates.push(UpdateRecord {
            episode: k,
            triggered,
            log_dets,
            log_det_growth,
            rho_charged,
            factorized,
        });
        Ok(())
    }

    /// `clamp(⟨φ, w_h⟩ + β ‖φ‖_{Λ̃_h⁻¹}, 0, H)` under the current policy.
    pub fn q_value(&self, x: usize, a: usize, h: usize) -> f64 {
        let phi = self.features.get(x, a);
        let bonus = self.constants.beta * libm::sqrt(self.solvers[h].inv_quad(phi).max(0.0));
        (dot(phi, &self.weights[h]) + bonus).clamp(0.0, self.config.horizon as f64)
    }

    pub fn value(&self, x: usize, h: usize) -> f64 {
        (0..self.features.actions())
            .map(|a| self.q_value(x, a, h))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest index.
    pub fn act(&self, x: usize, h: usize) -> usize {
        let mut best = 0;
        let mut best_q = self.q_value(x, 0, h);
        for a in 1..self.features.actions() {
            let q = self.q_value(x, a, h);
            if q > best_q {
                best = a;
                best_q = q;
            }
        }
        best
    }

    pub fn record_step(
        &mut self,
        h: usize,
        x: usize,
        a: usize,
        reward: f64,
        next_state: usize,
    ) -> Result<(), AgentError> {
        if self.episode == 0 {
            return Err(AgentError::NoEpisode);
        }
        if h >= self.config.horizon {
            return Err(AgentError::StageOutOfRange { h });
        }
        if self.recorded[h] {
            return Err(AgentError::DoubleRecord {
                episode: self.episode,
                h,
            });
        }
        if self.config.is_private() && !self.tree_charged[h] {
            self.ledger.charge(
                self.binary,
                &format!("gram tree h={h}"),
                self.constants.tree_rho,
                super::GRAM_SENSITIVITY,
            )?;
            self.tree_charged[h] = true;
        }
        let item = SquareMatrix::outer(self.features.get(x, a));
        self.trees[h].feed(item.as_slice())?;
        self.recorded[h] = true;
        self.history[h].push(Step {
            state: x,
            action: a,
            reward,
            next_state,
        });
        Ok(())
    }

    pub fn record_episode(&mut self, trace: &EpisodeTrace) -> Result<(), AgentError> {
        for (h, s) in trace.steps.iter().enumerate() {
            self.record_step(h, s.state, s.action, s.reward, s.next_state)?;
        }
        Ok(())
    }
}
