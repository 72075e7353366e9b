//! Property audits. Failures are report content, not errors.

use std::fmt::Write as _;

use dprl_core::dp::{
    ConcentrationParams, matrix_opnorm_bound, symmetric_gaussian_matrix, vector_norm_bound,
};
use dprl_core::linalg::{SquareMatrix, norm2};
use dprl_core::mdp::EpisodeTrace;
use dprl_core::rl::{BetaMode, empirical_sensitivity_audit};
use dprl_core::rng::{Purpose, StreamLabel, derive_seed, standard_normal, stream};
use dprl_core::{AgentConfig, LinearMdp, PrivateLsviUcb};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{AuditParams, Suite};
use crate::runner::RunError;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub suite: Suite,
    pub checks: usize,
    pub failures: usize,
    pub quantities: Vec<(String, f64)>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.quantities.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "suite {:?}: {} checks, {} failures: {}",
            self.suite,
            self.checks,
            self.failures,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        for (name, value) in &self.quantities {
            let _ = writeln!(out, "  {name} = {value}");
        }
        out
    }
}

fn label(index: usize, part: u64) -> StreamLabel {
    StreamLabel::new(Purpose::Audit, part, index as u64)
}

pub fn run_audit(suite: Suite, params: &AuditParams, seed: u64) -> Result<AuditReport, RunError> {
    match suite {
        Suite::Sensitivity => Ok(sensitivity(params, seed)?),
        Suite::Noise => Ok(noise(params, seed)),
        Suite::Optimism => optimism(params, seed),
        Suite::Switching => switching(params, seed),
    }
}

fn random_episode<R: Rng>(mdp: &LinearMdp, rng: &mut R) -> EpisodeTrace {
    let actions = mdp.actions();
    let choices: Vec<Vec<usize>> = (0..mdp.horizon())
        .map(|_| (0..mdp.states()).map(|_| rng.random_range(0..actions)).collect())
        .collect();
    mdp.sample_episode(mdp.initial_state(), |h, x| choices[h][x], rng)
}

/// Random neighboring histories on random linear and tabular instances,
/// with next-stage values drawn beyond `[0, H]` to exercise the clipping.
pub fn sensitivity(params: &AuditParams, seed: u64) -> Result<AuditReport, RunError> {
    let pairs = params.trials.unwrap_or(500);
    let horizons = params.horizons.clone().unwrap_or_else(|| vec![2]);
    let dims = params.dims.clone().unwrap_or_else(|| vec![3]);
    let history = params.history.unwrap_or(8).max(1);
    let (states, actions) = (params.states.unwrap_or(3), params.actions.unwrap_or(2));
    let mut report = AuditReport {
        suite: Suite::Sensitivity,
        checks: 0,
        failures: 0,
        quantities: Vec::new(),
    };
    let (mut max_dy, mut max_dl, mut max_ratio) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..pairs {
        let h_max = horizons[i % horizons.len()];
        let instance_seed = derive_seed(seed, label(i, 0));
        let mdp = if i % 2 == 0 {
            LinearMdp::random_instance(instance_seed, dims[(i / 2) % dims.len()], states, actions, h_max)?
        } else {
            LinearMdp::random_tabular(instance_seed, states, actions, h_max)?
        };
        let mut rng = stream(seed, label(i, 1));
        let left: Vec<EpisodeTrace> = (0..history).map(|_| random_episode(&mdp, &mut rng)).collect();
        let mut right = left.clone();
        let j = rng.random_range(0..history);
        right[j] = random_episode(&mdp, &mut rng);
        let h = rng.random_range(0..h_max);
        let cap = h_max as f64;
        let next: Vec<f64> = (0..mdp.states()).map(|_| rng.random_range(-1.0..cap + 1.0)).collect();
        let (dy, dl) = empirical_sensitivity_audit(mdp.features(), &left, &right, h, &next)
            .map_err(|e| RunError::Environment(e.to_string()))?;
        let bound_y = 2.0 + 2.0 * cap;
        report.checks += 1;
        if dy > bound_y + 1e-12 || dl > 2.0 + 1e-12 {
            report.failures += 1;
        }
        max_dy = max_dy.max(dy);
        max_dl = max_dl.max(dl);
        max_ratio = max_ratio.max(dy / bound_y);
    }
    report.quantities = vec![
        ("max_delta_y".into(), max_dy),
        ("max_delta_y_over_bound".into(), max_ratio),
        ("max_delta_gram_opnorm".into(), max_dl),
    ];
    Ok(report)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Monte Carlo exceedance of the matrix and vector noise bounds. Passes
/// when each rate is at most twice the nominal failure probability.
pub fn noise(params: &AuditParams, seed: u64) -> AuditReport {
    let trials = params.trials.unwrap_or(2000);
    let dims = params.dims.clone().unwrap_or_else(|| vec![4]);
    let sigma = params.sigma.unwrap_or(1.0);
    let m = params.log_terms.unwrap_or(1).max(1);
    let beta = params.failure_prob.unwrap_or(0.05);
    let mut report = AuditReport {
        suite: Suite::Noise,
        checks: 0,
        failures: 0,
        quantities: Vec::new(),
    };
    for (di, &d) in dims.iter().enumerate() {
        let p = ConcentrationParams::new(d, sigma, m, beta).expect("valid audit parameters");
        let (mb, vb) = (matrix_opnorm_bound(&p), vector_norm_bound(&p));
        let mut rng = stream(seed, label(di, 2));
        let mut matrix_ratios = Vec::with_capacity(trials);
        let mut vector_ratios = Vec::with_capacity(trials);
        for _ in 0..trials {
            let mut sum = SquareMatrix::zeros(d);
            let mut v = vec![0.0; d];
            for _ in 0..m {
                sum.add_assign(&symmetric_gaussian_matrix(d, sigma, &mut rng));
                v.iter_mut().for_each(|x| *x += sigma * standard_normal(&mut rng));
            }
            matrix_ratios.push(sum.sym_opnorm() / mb);
            vector_ratios.push(norm2(&v) / vb);
        }
        for (name, ratios) in [("matrix", &mut matrix_ratios), ("vector", &mut vector_ratios)] {
            ratios.sort_by(f64::total_cmp);
            let rate = ratios.iter().filter(|&&r| r > 1.0).count() as f64 / trials.max(1) as f64;
            report.checks += 1;
            if rate > 2.0 * beta {
                report.failures += 1;
            }
            report.quantities.push((format!("d{d}_{name}_exceedance"), rate));
            report.quantities.push((format!("d{d}_{name}_ratio_median"), quantile(ratios, 0.5)));
            report.quantities.push((format!("d{d}_{name}_ratio_q95"), quantile(ratios, 0.95)));
        }
    }
    report
}

/// Fraction of episodes whose optimistic `V₁(x₁)` is at least `V*₁(x₁)`, on
/// random 2-state, 2-action tabular instances.
pub fn optimism(params: &AuditParams, seed: u64) -> Result<AuditReport, RunError> {
    let seeds = params.seeds.unwrap_or(20);
    let episodes = params.episodes.unwrap_or(64);
    let h_max = params.horizons.as_ref().and_then(|h| h.first().copied()).unwrap_or(2);
    let (states, actions) = (params.states.unwrap_or(2), params.actions.unwrap_or(2));
    let rho = params.rho.unwrap_or(1.0);
    let runs = (0..seeds)
        .into_par_iter()
        .map(|i| -> Result<(usize, f64), RunError> {
            let run_seed = derive_seed(seed, label(i, 3));
            let mdp = LinearMdp::random_tabular(run_seed, states, actions, h_max)?;
            let start = mdp.initial_state();
            let best = mdp.solve_oracle().v(0, start);
            let mut config = AgentConfig::new(mdp.dim(), h_max, episodes, rho, run_seed);
            if let Some(beta) = params.beta {
                config.beta = BetaMode::Manual(beta);
            }
            let wrap = |source| RunError::Agent { replication: i, source };
            let mut agent = PrivateLsviUcb::new(config, mdp.features().clone()).map_err(wrap)?;
            let mut rng = stream(run_seed, StreamLabel::new(Purpose::Environment, 0, 0));
            let (mut covered, mut gap) = (0usize, 0.0f64);
            for k in 1..=episodes {
                agent.begin_episode(k).map_err(wrap)?;
                let v1 = agent.value(start, 0);
                if v1 >= best - 1e-9 {
                    covered += 1;
                }
                gap = gap.min(v1 - best);
                let trace = mdp.sample_episode(start, |h, x| agent.act(x, h), &mut rng);
                agent.record_episode(&trace).map_err(wrap)?;
            }
            Ok((covered, gap))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total = seeds * episodes;
    let covered: usize = runs.iter().map(|r| r.0).sum();
    let gap = runs.iter().map(|r| r.1).fold(0.0, f64::min);
    let coverage = covered as f64 / total.max(1) as f64;
    Ok(AuditReport {
        suite: Suite::Optimism,
        checks: 1,
        failures: usize::from(coverage < 0.95),
        quantities: vec![
            ("coverage".into(), coverage),
            ("episodes".into(), total as f64),
            ("most_negative_gap".into(), gap),
        ],
    })
}

struct SwitchingRun {
    good: bool,
    updates: usize,
    n_max: usize,
    suppressed: usize,
}

/// Update counts against `N_max` on runs where every released Gram noise
/// stayed within `λ̃_Λ` in operator norm. A run also fails if any trigger
/// was suppressed by the cap.
pub fn switching(params: &AuditParams, seed: u64) -> Result<AuditReport, RunError> {
    let seeds = params.seeds.unwrap_or(20);
    let dims = params.dims.clone().unwrap_or_else(|| vec![2, 4]);
    let horizons = params.horizons.clone().unwrap_or_else(|| vec![2, 3]);
    let episodes = params.episodes.unwrap_or(1024);
    let rho = params.rho.unwrap_or(1.0);
    let (states, actions) = (params.states.unwrap_or(3), params.actions.unwrap_or(2));
    let runs = (0..seeds)
        .into_par_iter()
        .map(|i| -> Result<SwitchingRun, RunError> {
            let d = dims[i % dims.len()];
            let h_max = horizons[(i / dims.len()) % horizons.len()];
            let run_seed = derive_seed(seed, label(i, 4));
            let mdp = LinearMdp::random_instance(run_seed, d, states, actions, h_max)?;
            let mut config = AgentConfig::new(d, h_max, episodes, rho, run_seed);
            if let Some(beta) = params.beta {
                config.beta = BetaMode::Manual(beta);
            }
            let wrap = |source| RunError::Agent { replication: i, source };
            let mut agent = PrivateLsviUcb::new(config, mdp.features().clone()).map_err(wrap)?;
            let mut rng = stream(run_seed, StreamLabel::new(Purpose::Environment, 0, 0));
            let start = mdp.initial_state();
            for k in 1..=episodes {
                agent.begin_episode(k).map_err(wrap)?;
                let trace = mdp.sample_episode(start, |h, x| agent.act(x, h), &mut rng);
                agent.record_episode(&trace).map_err(wrap)?;
            }
            Ok(SwitchingRun {
                good: agent.max_gram_noise() <= agent.constants().lambda_shift,
                updates: agent.switching_count(),
                n_max: agent.constants().n_max,
                suppressed: agent.update_log().suppressed,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let good: Vec<&SwitchingRun> = runs.iter().filter(|r| r.good).collect();
    let failures = good.iter().filter(|r| r.updates > r.n_max || r.suppressed > 0).count();
    let max_updates = good.iter().map(|r| r.updates).max().unwrap_or(0);
    let worst_ratio = good
        .iter()
        .map(|r| r.updates as f64 / r.n_max as f64)
        .fold(0.0, f64::max);
    Ok(AuditReport {
        suite: Suite::Switching,
        checks: good.len(),
        failures,
        quantities: vec![
            ("runs".into(), seeds as f64),
            ("good_event_runs".into(), good.len() as f64),
            ("max_updates".into(), max_updates as f64),
            ("max_updates_over_n_max".into(), worst_ratio),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_audits_pass() {
        let params = AuditParams {
            trials: Some(60),
            seeds: Some(4),
            episodes: Some(32),
            ..AuditParams::default()
        };
        for suite in [Suite::Sensitivity, Suite::Noise, Suite::Optimism, Suite::Switching] {
            let report = run_audit(suite, &params, 1).unwrap();
            assert!(report.passed(), "{}", report.render());
            assert!(report.checks > 0);
        }
    }
}
