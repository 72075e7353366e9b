//! Finite-latent-state linear MDPs.
//!
//! Transitions and rewards are linear in a known feature map:
//! `P_h(· | x, a) = φ(x, a)ᵀ M_h` and `r_h(x, a) = ⟨φ(x, a), θ_h⟩`, where
//! `M_h` is `d × S`. Stages are 0-based throughout: `h ∈ 0..H`.

mod oracle;

pub use oracle::{OracleValues, ValueTable};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::distr::Distribution;
use rand::distr::weighted::WeightedIndex;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm2};
use crate::rng::{Purpose, StreamLabel, stream};

/// Slack allowed on probabilities before they count as negative.
pub const NEGATIVE_PROB_TOLERANCE: f64 = 1e-12;
const SUM_TOLERANCE: f64 = 1e-9;
const REWARD_TOLERANCE: f64 = 1e-9;
const FEATURE_NORM_TOLERANCE: f64 = 1e-12;
const PARAM_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MdpError {
    #[error("feature norm {norm} exceeds 1 at state {x}, action {a}")]
    InvalidFeatureNorm { x: usize, a: usize, norm: f64 },
    #[error("transition from state {x}, action {a} at stage {h} is not a probability vector")]
    InvalidTransition { x: usize, a: usize, h: usize },
    #[error("reward {value} at state {x}, action {a}, stage {h} is outside [0, 1]")]
    InvalidReward { x: usize, a: usize, h: usize, value: f64 },
    #[error("stage {h} parameter norm {norm} exceeds {bound}")]
    InvalidParameterNorm { h: usize, norm: f64, bound: f64 },
    #[error("malformed instance: {0}")]
    Shape(&'static str),
    #[error("initial state {0} is out of range")]
    InvalidInitialState(usize),
    #[error("no valid instance after {0} attempts")]
    GenerationFailed(usize),
}

/// `φ(x, a)` for every latent state and action, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Vec<f64>>>", into = "Vec<Vec<Vec<f64>>>")]
pub struct FeatureTable {
    states: usize,
    actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn new(states: usize, actions: usize, dim: usize, data: Vec<f64>) -> Result<Self, MdpError> {
        if states == 0 || actions == 0 || dim == 0 {
            return Err(MdpError::Shape("states, actions and dimension must be positive"));
        }
        if data.len() != states * actions * dim {
            return Err(MdpError::Shape("feature data length must be S·A·d"));
        }
        Ok(Self {
            states,
            actions,
            dim,
            data,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.actions + a) * self.dim;
        &self.data[start..start + self.dim]
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for FeatureTable {
    type Error = MdpError;

    fn try_from(rows: Vec<Vec<Vec<f64>>>) -> Result<Self, MdpError> {
        let states = rows.len();
        let actions = rows.first().map_or(0, Vec::len);
        let dim = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != actions || r.iter().any(|v| v.len() != dim)) {
            return Err(MdpError::Shape("ragged feature table"));
        }
        Self::new(states, actions, dim, rows.into_iter().flatten().flatten().collect())
    }
}

impl From<FeatureTable> for Vec<Vec<Vec<f64>>> {
    fn from(t: FeatureTable) -> Self {
        (0..t.states)
            .map(|x| (0..t.actions).map(|a| t.get(x, a).to_vec()).collect())
            .collect()
    }
}

/// Serialized form of [`LinearMdp`]. `measures[h][i][s]` is row `i` of `M_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearMdpSpec {
    pub d: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    pub phi: FeatureTable,
    pub measures: Vec<Vec<Vec<f64>>>,
    pub thetas: Vec<Vec<f64>>,
    #[serde(default)]
    pub initial_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearMdpSpec", into = "LinearMdpSpec")]
pub struct LinearMdp {
    phi: FeatureTable,
    /// Per stage, `M_h` row-major (`d × S`).
    measures: Vec<Vec<f64>>,
    thetas: Vec<Vec<f64>>,
    initial_state: usize,
}

impl TryFrom<LinearMdpSpec> for LinearMdp {
    type Error = MdpError;

    fn try_from(spec: LinearMdpSpec) -> Result<Self, MdpError> {
        if spec.phi.states() != spec.states || spec.phi.actions() != spec.actions || spec.phi.dim() != spec.d {
            return Err(MdpError::Shape("phi must be S × A × d"));
        }
        if spec.measures.len() != spec.horizon
            || spec
                .measures
                .iter()
                .any(|m| m.len() != spec.d || m.iter().any(|row| row.len() != spec.states))
        {
            return Err(MdpError::Shape("measures must be H × d × S"));
        }
        let measures = spec
            .measures
            .into_iter()
            .map(|m| m.into_iter().flatten().collect())
            .collect();
        Self::new(spec.phi, measures, spec.thetas, spec.initial_state)
    }
}

impl From<LinearMdp> for LinearMdpSpec {
    fn from(m: LinearMdp) -> Self {
        let s = m.states();
        LinearMdpSpec {
            d: m.dim(),
            horizon: m.horizon(),
            states: s,
            actions: m.actions(),
            measures: m
                .measures
                .iter()
                .map(|flat| flat.chunks(s).map(<[f64]>::to_vec).collect())
                .collect(),
            thetas: m.thetas,
            initial_state: m.initial_state,
            phi: m.phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<Step>,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

impl LinearMdp {
    /// Builds and validates an instance with the default parameter-norm bound.
    pub fn new(
        phi: FeatureTable,
        measures: Vec<Vec<f64>>,
        thetas: Vec<Vec<f64>>,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        let d = phi.dim();
        let s = phi.states();
        if measures.is_empty() {
            return Err(MdpError::Shape("horizon must be positive"));
        }
        if measures.iter().any(|m| m.len() != d * s) {
            return Err(MdpError::Shape("each measure matrix must be d × S"));
        }
        if thetas.len() != measures.len() || thetas.iter().any(|t| t.len() != d) {
            return Err(MdpError::Shape("thetas must be H vectors of length d"));
        }
        if initial_state >= s {
            return Err(MdpError::InvalidInitialState(initial_state));
        }
        let mdp = Self {
            phi,
            measures,
            thetas,
            initial_state,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn horizon(&self) -> usize {
        self.thetas.len()
    }

    pub fn states(&self) -> usize {
        self.phi.states()
    }

    pub fn actions(&self) -> usize {
        self.phi.actions()
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn features(&self) -> &FeatureTable {
        &self.phi
    }

    pub fn phi(&self, x: usize, a: usize) -> &[f64] {
        self.phi.get(x, a)
    }

    pub fn theta(&self, h: usize) -> &[f64] {
        &self.thetas[h]
    }

    /// Row `i` of `M_h`: the measure `μ_{h,i}` over latent states.
    pub fn measure_row(&self, h: usize, i: usize) -> &[f64] {
        let s = self.states();
        &self.measures[h][i * s..(i + 1) * s]
    }

    fn raw_transition(&self, x: usize, a: usize, h: usize) -> Vec<f64> {
        let phi = self.phi(x, a);
        let mut p = vec![0.0; self.states()];
        for (i, &f) in phi.iter().enumerate() {
            if f != 0.0 {
                for (ps, m) in p.iter_mut().zip(self.measure_row(h, i)) {
                    *ps += f * m;
                }
            }
        }
        p
    }

    /// `φ(x, a)ᵀ M_h` with dust below zero clamped away.
    pub fn transition_dist(&self, x: usize, a: usize, h: usize) -> Vec<f64> {
        let mut p = self.raw_transition(x, a, h);
        for v in &mut p {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        p
    }

    pub fn reward(&self, x: usize, a: usize, h: usize) -> f64 {
        dot(self.phi(x, a), &self.thetas[h])
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        self.validate_with(libm::sqrt(self.dim() as f64))
    }

    /// Checks the linear-MDP assumptions, bounding `‖θ_h‖` and `‖M_h 1‖` by
    /// `param_bound`.
    pub fn validate_with(&self, param_bound: f64) -> Result<(), MdpError> {
        for x in 0..self.states() {
            for a in 0..self.actions() {
                let norm = norm2(self.phi(x, a));
                if !(norm <= 1.0 + FEATURE_NORM_TOLERANCE) {
                    return Err(MdpError::InvalidFeatureNorm { x, a, norm });
                }
            }
        }
        for h in 0..self.horizon() {
            for x in 0..self.states() {
                for a in 0..self.actions() {
                    let p = self.raw_transition(x, a, h);
                    let sum: f64 = p.iter().sum();
                    let valid = p.iter().all(|&v| v >= -NEGATIVE_PROB_TOLERANCE)
                        && (sum - 1.0).abs() <= SUM_TOLERANCE;
                    if !valid {
                        return Err(MdpError::InvalidTransition { x, a, h });
                    }
                    let value = self.reward(x, a, h);
                    if !(-REWARD_TOLERANCE..=1.0 + REWARD_TOLERANCE).contains(&value) {
                        return Err(MdpError::InvalidReward { x, a, h, value });
                    }
                }
            }
        }
        for h in 0..self.horizon() {
            let row_sums: Vec<f64> = (0..self.dim())
                .map(|i| self.measure_row(h, i).iter().sum())
                .collect();
            for norm in [norm2(&self.thetas[h]), norm2(&row_sums)] {
                if !(norm <= param_bound * (1.0 + PARAM_NORM_TOLERANCE)) {
                    return Err(MdpError::InvalidParameterNorm {
                        h,
                        norm,
                        bound: param_bound,
                    });
                }
            }
        }
        Ok(())
    }

    /// One-hot realization of a tabular MDP: `d = S·A`, with `(s, a)` mapped
    /// to coordinate `s·A + a`. `transitions[h][s][a]` is a distribution over
    /// next states and `rewards[h][s][a] ∈ [0, 1]`.
    pub fn tabular_embedding(
        transitions: &[Vec<Vec<Vec<f64>>>],
        rewards: &[Vec<Vec<f64>>],
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        let horizon = transitions.len();
        let states = transitions.first().map_or(0, Vec::len);
        let actions = transitions
            .first()
            .and_then(|t| t.first())
            .map_or(0, Vec::len);
        if horizon == 0 || states == 0 || actions == 0 || rewards.len() != horizon {
            return Err(MdpError::Shape("tabular tables must be H × S × A"));
        }
        let d = states * actions;
        let mut features = vec![0.0; states * actions * d];
        for s in 0..states {
            for a in 0..actions {
                let i = s * actions + a;
                features[i * d + i] = 1.0;
            }
        }
        let phi = FeatureTable::new(states, actions, d, features)?;
        let mut measures = Vec::with_capacity(horizon);
        let mut thetas = Vec::with_capacity(horizon);
        for (p_h, r_h) in transitions.iter().zip(rewards) {
            if p_h.len() != states || r_h.len() != states {
                return Err(MdpError::Shape("tabular tables must be H × S × A"));
            }
            let mut m = Vec::with_capacity(d * states);
            let mut theta = Vec::with_capacity(d);
            for (p_s, r_s) in p_h.iter().zip(r_h) {
                if p_s.len() != actions || r_s.len() != actions {
                    return Err(MdpError::Shape("tabular tables must be H × S × A"));
                }
                for (p_sa, &r) in p_s.iter().zip(r_s) {
                    if p_sa.len() != states {
                        return Err(MdpError::Shape("transition rows must have length S"));
                    }
                    m.extend_from_slice(p_sa);
                    theta.push(r);
                }
            }
            measures.push(m);
            thetas.push(theta);
        }
        Self::new(phi, measures, thetas, initial_state)
    }

    /// Random instance: features on the probability simplex, each row of
    /// `M_h` a distribution over states, `θ_h ∈ [0, 1]^d`. Every such
    /// instance is valid, so the retry loop only guards rounding.
    pub fn random_instance(
        seed: u64,
        d: usize,
        states: usize,
        actions: usize,
        horizon: usize,
    ) -> Result<Self, MdpError> {
        const ATTEMPTS: usize = 8;
        if d == 0 || states == 0 || actions == 0 || horizon == 0 {
            return Err(MdpError::Shape("all sizes must be positive"));
        }
        for attempt in 0..ATTEMPTS {
            let mut rng = stream(seed, StreamLabel::new(Purpose::Instance, 0, attempt as u64));
            let simplex = |n: usize, rng: &mut crate::rng::StreamRng| -> Vec<f64> {
                let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            };
            let mut features = Vec::with_capacity(states * actions * d);
            for _ in 0..states * actions {
                features.extend(simplex(d, &mut rng));
            }
            let measures = (0..horizon)
                .map(|_| (0..d).flat_map(|_| simplex(states, &mut rng)).collect())
                .collect();
            let thetas = (0..horizon)
                .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                .collect();
            let phi = FeatureTable::new(states, actions, d, features)?;
            if let Ok(mdp) = Self::new(phi, measures, thetas, 0) {
                return Ok(mdp);
            }
        }
        Err(MdpError::GenerationFailed(ATTEMPTS))
    }

    /// Random tabular instance in its one-hot embedding: transition rows drawn
    /// uniformly from the simplex, rewards uniform on `[0, 1]`.
    pub fn random_tabular(seed: u64, states: usize, actions: usize, horizon: usize) -> Result<Self, MdpError> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(MdpError::Shape("all sizes must be positive"));
        }
        let mut rng = stream(seed, StreamLabel::new(Purpose::Instance, 1, 0));
        let mut transitions = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut p_h = Vec::with_capacity(states);
            let mut r_h = Vec::with_capacity(states);
            for _ in 0..states {
                let mut p_s = Vec::with_capacity(actions);
                let mut r_s = Vec::with_capacity(actions);
                for _ in 0..actions {
                    let raw: Vec<f64> = (0..states).map(|_| Exp1.sample(&mut rng)).collect();
                    let total: f64 = raw.iter().sum();
                    p_s.push(raw.into_iter().map(|v| v / total).collect());
                    r_s.push(rng.random::<f64>());
                }
                p_h.push(p_s);
                r_h.push(r_s);
            }
            transitions.push(p_h);
            rewards.push(r_h);
        }
        Self::tabular_embedding(&transitions, &rewards, 0)
    }

    /// Rolls out one episode from `start` under `policy(h, x)`.
    pub fn sample_episode<R, P>(&self, start: usize, mut policy: P, rng: &mut R) -> EpisodeTrace
    where
        R: Rng + ?Sized,
        P: FnMut(usize, usize) -> usize,
    {
        let mut steps = Vec::with_capacity(self.horizon());
        let mut x = start;
        for h in 0..self.horizon() {
            let a = policy(h, x);
            let reward = self.reward(x, a, h);
            let next_state = self.sample_next(x, a, h, rng);
            steps.push(Step {
                state: x,
                action: a,
                reward,
                next_state,
            });
            x = next_state;
        }
        EpisodeTrace { steps }
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, x: usize, a: usize, h: usize, rng: &mut R) -> usize {
        let p = self.transition_dist(x, a, h);
        WeightedIndex::new(&p)
            .expect("validated transition has positive mass")
            .sample(rng)
    }

    /// `Σ_{x′} P_h(x′ | x, a) v(x′)`.
    pub fn expected_next(&self, x: usize, a: usize, h: usize, v: &[f64]) -> f64 {
        dot(&self.transition_dist(x, a, h), v)
    }

    /// Exact optimal values by backward induction.
    pub fn solve_oracle(&self) -> OracleValues {
        OracleValues::solve(self)
    }

    /// Exact `V^π_h(x)` of a deterministic policy `policy(h, x)`.
    pub fn policy_value<P: Fn(usize, usize) -> usize>(&self, policy: P) -> ValueTable {
        let (h_max, s) = (self.horizon(), self.states());
        let mut v = ValueTable::zeros(h_max, s);
        for h in (0..h_max).rev() {
            for x in 0..s {
                let a = policy(h, x);
                let value = self.reward(x, a, h) + self.expected_next(x, a, h, v.stage(h + 1));
                v.set(h, x, value);
            }
        }
        v
    }
}
