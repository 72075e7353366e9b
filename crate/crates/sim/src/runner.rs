//! Seeded multi-replication runs.
//!
//! Replication `r` draws all of its randomness from
//! `derive_seed(seed, Replication, r)`, so results do not depend on how
//! replications are scheduled across threads.

use dprl_core::bandit::{BanditConfig, BanditError, SlowDpUcb};
use dprl_core::linalg::{dot, norm2};
use dprl_core::rl::AgentConfig;
use dprl_core::rng::{Purpose, StreamLabel, StreamRng, derive_seed, standard_normal, stream};
use dprl_core::{AgentError, LinearMdp, MdpError, PrivateLsviUcb};
use rayon::prelude::*;

use crate::config::{BanditEnvironment, DecisionSource, RlEnvironment};
use crate::io::{FileError, read_decision_sets, read_instance};
use crate::records::{RunRecord, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("environment: {0}")]
    Environment(String),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("replication {replication}: {source}")]
    Agent { replication: usize, source: AgentError },
    #[error("replication {replication}: {source}")]
    Bandit { replication: usize, source: BanditError },
}

impl From<MdpError> for RunError {
    fn from(e: MdpError) -> Self {
        RunError::Environment(e.to_string())
    }
}

pub fn replication_seed(seed: u64, replication: usize) -> u64 {
    derive_seed(seed, StreamLabel::new(Purpose::Replication, 0, replication as u64))
}

pub fn build_rl_environment(env: &RlEnvironment, agent: &AgentConfig) -> Result<LinearMdp, RunError> {
    let mdp = match env {
        RlEnvironment::Random {
            states,
            actions,
            instance_seed,
        } => LinearMdp::random_instance(*instance_seed, agent.dim, *states, *actions, agent.horizon)?,
        RlEnvironment::Tabular {
            states,
            actions,
            instance_seed,
        } => LinearMdp::random_tabular(*instance_seed, *states, *actions, agent.horizon)?,
        RlEnvironment::File(path) => read_instance(path)?,
    };
    if mdp.dim() != agent.dim || mdp.horizon() != agent.horizon {
        return Err(RunError::Environment(format!(
            "instance has d = {}, H = {}; the agent expects d = {}, H = {}",
            mdp.dim(),
            mdp.horizon(),
            agent.dim,
            agent.horizon
        )));
    }
    Ok(mdp)
}

/// One replication of private LSVI-UCB. Regret is exact: `V*₁(x₁) − V^{π_k}₁(x₁)`
/// from the oracle, clipped at zero against rounding.
pub fn run_rl_replication(
    mdp: &LinearMdp,
    config: &AgentConfig,
    seed: u64,
    replication: usize,
) -> Result<Vec<RunRecord>, RunError> {
    let wrap = |source| RunError::Agent { replication, source };
    let rep_seed = replication_seed(seed, replication);
    let agent_config = AgentConfig {
        seed: rep_seed,
        ..config.clone()
    };
    let mut agent = PrivateLsviUcb::new(agent_config, mdp.features().clone()).map_err(wrap)?;
    let mut env = stream(rep_seed, StreamLabel::new(Purpose::Environment, 0, 0));
    let start = mdp.initial_state();
    let best = mdp.solve_oracle().v(0, start);
    let (h_max, states) = (mdp.horizon(), mdp.states());
    let mut records = Vec::with_capacity(config.episodes);
    let mut cum = 0.0;
    for k in 1..=config.episodes {
        agent.begin_episode(k).map_err(wrap)?;
        let policy: Vec<Vec<usize>> = (0..h_max)
            .map(|h| (0..states).map(|x| agent.act(x, h)).collect())
            .collect();
        let value = mdp.policy_value(|h, x| policy[h][x]).get(0, start);
        let inst = (best - value).max(0.0);
        cum += inst;
        let trace = mdp.sample_episode(start, |h, x| policy[h][x], &mut env);
        agent.record_episode(&trace).map_err(wrap)?;
        records.push(RunRecord {
            schema_version: SCHEMA_VERSION,
            replication,
            step: k,
            inst_regret: inst,
            cum_regret: cum,
            switch_count: agent.switching_count(),
            rho_spent: agent.privacy_spent(),
            good_event: RunRecord::good_event_flags(agent.good_event(), agent.factorization_ok()),
        });
    }
    Ok(records)
}

pub fn run_rl(
    mdp: &LinearMdp,
    config: &AgentConfig,
    seed: u64,
    replications: usize,
) -> Result<Vec<RunRecord>, RunError> {
    let runs: Vec<Vec<RunRecord>> = (0..replications)
        .into_par_iter()
        .map(|r| run_rl_replication(mdp, config, seed, r))
        .collect::<Result<_, _>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// The bandit's true parameter and decision-set source.
#[derive(Debug, Clone)]
pub struct BanditWorld {
    pub theta: Vec<f64>,
    pub arms: Vec<Vec<f64>>,
    pub source: DecisionSource,
    pub file_sets: Option<Vec<Vec<Vec<f64>>>>,
    pub noise: f64,
}

fn random_unit<R: rand::Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Haar-random orthogonal matrix by Gram-Schmidt on Gaussian rows.
fn random_rotation<R: rand::Rng>(d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        for r in &rows {
            let p = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(vi, ri)| *vi -= p * ri);
        }
        let n = norm2(&v);
        if n > 1e-8 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows
}

impl BanditWorld {
    pub fn build(env: &BanditEnvironment, agent: &BanditConfig) -> Result<Self, RunError> {
        let d = agent.dim;
        let mut rng = stream(env.instance_seed, StreamLabel::new(Purpose::DecisionSets, 0, 0));
        let theta = match &env.theta {
            Some(t) => t.clone(),
            None => random_unit(d, &mut rng).into_iter().map(|x| x * agent.param_bound).collect(),
        };
        let arms = (0..env.arms)
            .map(|_| random_unit(d, &mut rng).into_iter().map(|x| x * agent.action_bound).collect())
            .collect();
        let file_sets = match &env.decision_sets {
            DecisionSource::File(path) => {
                let sets = read_decision_sets(path)?;
                if sets.len() < agent.horizon {
                    return Err(RunError::Environment(format!(
                        "decision-set file has {} rounds, T = {} are needed",
                        sets.len(),
                        agent.horizon
                    )));
                }
                if let Some(bad) = sets.iter().flatten().find(|x| x.len() != d) {
                    return Err(RunError::Environment(format!(
                        "decision-set file has a vector of length {}, expected {d}",
                        bad.len()
                    )));
                }
                Some(sets)
            }
            _ => None,
        };
        Ok(Self {
            theta,
            arms,
            source: env.decision_sets.clone(),
            file_sets,
            noise: env.noise,
        })
    }

    /// Decision set of 0-based round `t`.
    pub fn decision_set(&self, t: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        match &self.source {
            DecisionSource::Fixed => self.arms.clone(),
            DecisionSource::Rotated => {
                let q = random_rotation(self.theta.len(), rng);
                self.arms
                    .iter()
                    .map(|a| q.iter().map(|row| dot(row, a)).collect())
                    .collect()
            }
            DecisionSource::File(_) => self.file_sets.as_ref().expect("loaded at build")[t].clone(),
        }
    }
}

/// One bandit replication; also returns the decision sets and actions so
/// callers can recompute regret.
pub fn run_bandit_replication(
    world: &BanditWorld,
    config: &BanditConfig,
    seed: u64,
    replication: usize,
) -> Result<(Vec<RunRecord>, SlowDpUcb), RunError> {
    let wrap = |source| RunError::Bandit { replication, source };
    let rep_seed = replication_seed(seed, replication);
    let mut agent = SlowDpUcb::new(BanditConfig {
        seed: rep_seed,
        ..config.clone()
    })
    .map_err(wrap)?;
    let mut sets_rng = stream(rep_seed, StreamLabel::new(Purpose::DecisionSets, 1, 0));
    let mut noise_rng = stream(rep_seed, StreamLabel::new(Purpose::RewardNoise, 0, 0));
    let mut records = Vec::with_capacity(config.horizon);
    let mut cum = 0.0;
    for t in 0..config.horizon {
        let set = world.decision_set(t, &mut sets_rng);
        let i = agent.choose(&set).map_err(wrap)?;
        let means: Vec<f64> = set.iter().map(|x| dot(x, &world.theta)).collect();
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let inst = best - means[i];
        cum += inst;
        let reward = means[i] + world.noise * standard_normal(&mut noise_rng);
        agent.observe(&set[i], reward).map_err(wrap)?;
        records.push(RunRecord {
            schema_version: SCHEMA_VERSION,
            replication,
            step: t + 1,
            inst_regret: inst,
            cum_regret: cum,
            switch_count: agent.update_count(),
            rho_spent: agent.privacy_spent(),
            good_event: RunRecord::good_event_flags(agent.good_event(), true),
        });
    }
    Ok((records, agent))
}

pub fn run_bandit(
    world: &BanditWorld,
    config: &BanditConfig,
    seed: u64,
    replications: usize,
) -> Result<Vec<RunRecord>, RunError> {
    let runs: Vec<Vec<RunRecord>> = (0..replications)
        .into_par_iter()
        .map(|r| run_bandit_replication(world, config, seed, r).map(|(records, _)| records))
        .collect::<Result<_, _>>()?;
    Ok(runs.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dprl_core::bandit::BanditConfig;

    #[test]
    fn single_action_mdp_has_zero_regret() {
        let mdp = LinearMdp::random_instance(2, 3, 4, 1, 3).unwrap();
        let config = AgentConfig::new(3, 3, 20, 0.0, 0);
        let records = run_rl(&mdp, &config, 5, 2).unwrap();
        assert_eq!(records.len(), 40);
        assert!(records.iter().all(|r| r.inst_regret == 0.0 && r.cum_regret == 0.0));
    }

    #[test]
    fn replications_are_isolated_and_deterministic() {
        let mdp = LinearMdp::random_instance(1, 2, 3, 2, 2).unwrap();
        let config = AgentConfig::new(2, 2, 30, 1.0, 0);
        let all = run_rl(&mdp, &config, 9, 3).unwrap();
        assert_eq!(all, run_rl(&mdp, &config, 9, 3).unwrap());
        let second = run_rl_replication(&mdp, &config, 9, 1).unwrap();
        assert_eq!(&all[30..60], &second[..]);
        for rep in all.chunks(30) {
            assert!(rep.windows(2).all(|w| w[1].cum_regret >= w[0].cum_regret));
            assert!(rep.windows(2).all(|w| w[1].switch_count >= w[0].switch_count));
            assert!(rep.iter().all(|r| r.rho_spent <= 1.0));
        }
    }

    #[test]
    fn rotation_preserves_norms() {
        let mut rng = stream(0, StreamLabel::new(Purpose::Audit, 0, 0));
        let q = random_rotation(4, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&q[i], &q[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bandit_run_is_monotone_and_budgeted() {
        let config = BanditConfig::new(3, 200, 0.5, 0);
        let env = BanditEnvironment {
            arms: 6,
            decision_sets: DecisionSource::Rotated,
            theta: None,
            noise: 0.1,
            instance_seed: 4,
        };
        let world = BanditWorld::build(&env, &config).unwrap();
        assert!((norm2(&world.theta) - 1.0).abs() < 1e-12);
        let records = run_bandit(&world, &config, 2, 2).unwrap();
        assert_eq!(records.len(), 400);
        assert!(records.windows(2).filter(|w| w[0].replication == w[1].replication).all(|w| w[1].cum_regret >= w[0].cum_regret));
        assert!(records.iter().all(|r| r.rho_spent <= 0.5 && r.inst_regret >= 0.0));
    }
}
