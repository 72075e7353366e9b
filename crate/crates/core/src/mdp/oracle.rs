use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::LinearMdp;

/// `V_h(x)` for `h ∈ 0..=H`, with the terminal row `V_H ≡ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    horizon: usize,
    states: usize,
    data: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(horizon: usize, states: usize) -> Self {
        Self {
            horizon,
            states,
            data: vec![0.0; (horizon + 1) * states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, h: usize, x: usize) -> f64 {
        self.data[h * self.states + x]
    }

    pub fn set(&mut self, h: usize, x: usize, v: f64) {
        self.data[h * self.states + x] = v;
    }

    pub fn stage(&self, h: usize) -> &[f64] {
        &self.data[h * self.states..(h + 1) * self.states]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    actions: usize,
    q: Vec<f64>,
    v: ValueTable,
}

impl OracleValues {
    pub(super) fn solve(mdp: &LinearMdp) -> Self {
        let (horizon, states, actions) = (mdp.horizon(), mdp.states(), mdp.actions());
        let mut v = ValueTable::zeros(horizon, states);
        let mut q = vec![0.0; horizon * states * actions];
        for h in (0..horizon).rev() {
            for x in 0..states {
                let mut best = f64::NEG_INFINITY;
                for a in 0..actions {
                    let value = mdp.reward(x, a, h) + mdp.expected_next(x, a, h, v.stage(h + 1));
                    q[(h * states + x) * actions + a] = value;
                    best = best.max(value);
                }
                v.set(h, x, best);
            }
        }
        Self { actions, q, v }
    }

    pub fn q(&self, h: usize, x: usize, a: usize) -> f64 {
        self.q[(h * self.v.states + x) * self.actions + a]
    }

    pub fn v(&self, h: usize, x: usize) -> f64 {
        self.v.get(h, x)
    }

    pub fn values(&self) -> &ValueTable {
        &self.v
    }

    /// Optimal action with ties to the lowest index.
    pub fn greedy_action(&self, h: usize, x: usize) -> usize {
        let mut best = 0;
        for a in 1..self.actions {
            if self.q(h, x, a) > self.q(h, x, best) {
                best = a;
            }
        }
        best
    }

    /// Largest violation of the Bellman optimality equations.
    pub fn bellman_residual(&self, mdp: &LinearMdp) -> f64 {
        let mut worst = 0.0f64;
        for h in 0..mdp.horizon() {
            for x in 0..mdp.states() {
                let mut best = f64::NEG_INFINITY;
                for a in 0..mdp.actions() {
                    let target = mdp.reward(x, a, h) + mdp.expected_next(x, a, h, self.v.stage(h + 1));
                    worst = worst.max((self.q(h, x, a) - target).abs());
                    best = best.max(self.q(h, x, a));
                }
                worst = worst.max((self.v(h, x) - best).abs());
            }
        }
        for x in 0..mdp.states() {
            worst = worst.max(self.v(mdp.horizon(), x).abs());
        }
        worst
    }
}
