use alloc::vec;

use super::AgentError;
use crate::linalg::{SquareMatrix, norm2};
use crate::mdp::{EpisodeTrace, FeatureTable};

/// Stage-`h` regression statistics of two histories that differ in at most
/// one episode, with a shared next-stage value function.
///
/// Returns `(‖y − y′‖₂, ‖Λ − Λ′‖_op)`. Values are clipped to `[0, H]` as in
/// the agent.
pub fn empirical_sensitivity_audit(
    features: &FeatureTable,
    left: &[EpisodeTrace],
    right: &[EpisodeTrace],
    h: usize,
    next_values: &[f64],
) -> Result<(f64, f64), AgentError> {
    if left.len() != right.len() || left.iter().zip(right).filter(|(a, b)| a != b).count() > 1 {
        return Err(AgentError::HistoriesNotNeighbors);
    }
    let horizon = left.first().map_or(0, |t| t.steps.len());
    if left.iter().chain(right).any(|t| t.steps.len() != horizon) {
        return Err(AgentError::HistoriesNotNeighbors);
    }
    if h >= horizon && !left.is_empty() {
        return Err(AgentError::StageOutOfRange { h });
    }
    let cap = horizon as f64;
    let d = features.dim();
    let stats = |history: &[EpisodeTrace]| {
        let mut y = vec![0.0; d];
        let mut gram = SquareMatrix::zeros(d);
        for trace in history {
            let s = trace.steps[h];
            let phi = features.get(s.state, s.action);
            let target = s.reward + next_values[s.next_state].clamp(0.0, cap);
            for (yi, f) in y.iter_mut().zip(phi) {
                *yi += f * target;
            }
            gram.add_outer(phi, 1.0);
        }
        (y, gram)
    };
    let (y, gram) = stats(left);
    let (y2, gram2) = stats(right);
    let dy: vec::Vec<f64> = y.iter().zip(&y2).map(|(a, b)| a - b).collect();
    Ok((norm2(&dy), gram.sub(&gram2).sym_opnorm()))
}
