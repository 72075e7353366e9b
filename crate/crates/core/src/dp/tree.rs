//! Binary-tree ("binary mechanism") streaming release of prefix sums.
//!
//! Node `(ℓ, j)` (1-based `j`) covers items `[(j−1)·2^ℓ + 1, j·2^ℓ]`. A node
//! is closed, and its single noise draw sampled, when its last item arrives.
//! `release(t)` sums the nodes of the binary decomposition of `t`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DpError;
use super::mechanism::symmetric_gaussian_matrix;
use crate::linalg::SquareMatrix;
use crate::rng::{StreamRng, standard_normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementKind {
    /// Symmetric `d × d` matrices, stored row-major.
    Matrix(usize),
    Vector(usize),
}

impl ElementKind {
    pub fn len(self) -> usize {
        match self {
            ElementKind::Matrix(d) => d * d,
            ElementKind::Vector(d) => d,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ElementKind::Matrix(d) | ElementKind::Vector(d) => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeId {
    pub level: u32,
    /// 1-based position within the level.
    pub index: usize,
}

impl NodeId {
    pub fn first(self) -> usize {
        (self.index - 1) * (1usize << self.level) + 1
    }

    pub fn last(self) -> usize {
        self.index * (1usize << self.level)
    }

    pub fn contains(self, item: usize) -> bool {
        (self.first()..=self.last()).contains(&item)
    }
}

/// Nodes covering `[1, t]`, largest first. Its length is `popcount(t)`.
pub fn dyadic_decomposition(t: usize) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for level in (0..usize::BITS).rev() {
        let size = 1usize << level;
        if t & size != 0 {
            out.push(NodeId {
                level,
                index: start / size + 1,
            });
            start += size;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    exact: Vec<f64>,
    noise: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeAggregator {
    horizon: usize,
    kind: ElementKind,
    node_sigma: f64,
    levels: Vec<Vec<Node>>,
    count: usize,
    noise_draws: usize,
    rng: StreamRng,
}

impl TreeAggregator {
    pub fn new(
        horizon: usize,
        kind: ElementKind,
        node_sigma: f64,
        rng: StreamRng,
    ) -> Result<Self, DpError> {
        if horizon == 0 || kind.dim() == 0 {
            return Err(DpError::InvalidParams("tree horizon and dimension must be positive"));
        }
        if !(node_sigma.is_finite() && node_sigma >= 0.0) {
            return Err(DpError::InvalidParams("node sigma must be finite and nonnegative"));
        }
        let depth = (usize::BITS - horizon.leading_zeros()) as usize;
        Ok(Self {
            horizon,
            kind,
            node_sigma,
            levels: vec![Vec::new(); depth],
            count: 0,
            noise_draws: 0,
            rng,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn node_sigma(&self) -> f64 {
        self.node_sigma
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Total number of noise draws so far, one per closed node.
    pub fn noise_draws(&self) -> usize {
        self.noise_draws
    }

    fn draw_noise(&mut self) -> Vec<f64> {
        self.noise_draws += 1;
        let len = self.kind.len();
        if self.node_sigma == 0.0 {
            return vec![0.0; len];
        }
        match self.kind {
            ElementKind::Matrix(d) => {
                symmetric_gaussian_matrix(d, self.node_sigma, &mut self.rng).into_vec()
            }
            ElementKind::Vector(_) => (0..len)
                .map(|_| self.node_sigma * standard_normal(&mut self.rng))
                .collect(),
        }
    }

    pub fn feed(&mut self, item: &[f64]) -> Result<(), DpError> {
        if item.len() != self.kind.len() {
            return Err(DpError::DimensionMismatch {
                expected: self.kind.len(),
                got: item.len(),
            });
        }
        if self.count == self.horizon {
            return Err(DpError::HorizonExceeded(self.horizon));
        }
        self.count += 1;
        let t = self.count;
        let noise = self.draw_noise();
        self.levels[0].push(Node {
            exact: item.to_vec(),
            noise,
        });
        for level in 1..self.levels.len() {
            if t % (1usize << level) != 0 {
                break;
            }
            let below = &self.levels[level - 1];
            let right = &below[below.len() - 1];
            let left = &below[below.len() - 2];
            let exact = left.exact.iter().zip(&right.exact).map(|(a, b)| a + b).collect();
            let noise = self.draw_noise();
            self.levels[level].push(Node { exact, noise });
        }
        Ok(())
    }

    fn check_prefix(&self, t: usize) -> Result<(), DpError> {
        if t > self.count || t > self.horizon {
            return Err(DpError::OutOfRange {
                requested: t,
                fed: self.count,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.levels[id.level as usize][id.index - 1]
    }

    /// Sum over the covering nodes, and how many nodes were summed.
    fn accumulate_counted(
        &self,
        t: usize,
        with_exact: bool,
        with_noise: bool,
    ) -> Result<(Vec<f64>, usize), DpError> {
        self.check_prefix(t)?;
        let mut out = vec![0.0; self.kind.len()];
        let mut nodes = 0;
        for id in dyadic_decomposition(t) {
            nodes += 1;
            let node = self.node(id);
            for (i, o) in out.iter_mut().enumerate() {
                if with_exact {
                    *o += node.exact[i];
                }
                if with_noise {
                    *o += node.noise[i];
                }
            }
        }
        Ok((out, nodes))
    }

    fn accumulate(&self, t: usize, with_exact: bool, with_noise: bool) -> Result<Vec<f64>, DpError> {
        self.accumulate_counted(t, with_exact, with_noise).map(|(out, _)| out)
    }

    /// Noisy prefix sum of the first `t` items (`t = 0` gives zero).
    pub fn release(&self, t: usize) -> Result<Vec<f64>, DpError> {
        self.accumulate(t, true, true)
    }

    /// [`release`](Self::release) reshaped as a matrix; panics on vector trees.
    pub fn release_matrix(&self, t: usize) -> Result<SquareMatrix, DpError> {
        match self.kind {
            ElementKind::Matrix(d) => Ok(SquareMatrix::from_row_major(d, self.release(t)?)),
            ElementKind::Vector(_) => panic!("release_matrix called on a vector tree"),
        }
    }

    /// Just the aggregated noise inside `release(t)`. Diagnostic only: it is
    /// not a private quantity.
    pub fn release_noise(&self, t: usize) -> Result<Vec<f64>, DpError> {
        self.accumulate(t, false, true)
    }

    /// Number of closed nodes that contain the 1-based item index.
    pub fn memberships(&self, item: usize) -> usize {
        self.levels
            .iter()
            .enumerate()
            .filter(|(level, nodes)| {
                let size = 1usize << level;
                let index = (item - 1) / size + 1;
                index <= nodes.len()
            })
            .count()
    }

    /// Number of node noise draws summed by `release(t)`.
    pub fn draws_in_release(&self, t: usize) -> Result<usize, DpError> {
        self.accumulate_counted(t, false, true).map(|(_, nodes)| nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::tree_log_terms;
    use crate::rng::{Purpose, StreamLabel, stream};
    use proptest::prelude::*;

    fn rng(seed: u64) -> StreamRng {
        stream(seed, StreamLabel::new(Purpose::GramTree, 0, 0))
    }

    #[test]
    fn zero_noise_prefix() {
        let mut t = TreeAggregator::new(8, ElementKind::Vector(1), 0.0, rng(1)).unwrap();
        for v in [1.0, 2.0, 3.0, 4.0] {
            t.feed(&[v]).unwrap();
        }
        assert_eq!(t.release(3).unwrap(), vec![6.0]);
        assert_eq!(t.release(0).unwrap(), vec![0.0]);
        assert_eq!(
            t.release(5),
            Err(DpError::OutOfRange {
                requested: 5,
                fed: 4,
                horizon: 8
            })
        );
    }

    #[test]
    fn decomposition_of_six() {
        let d = dyadic_decomposition(6);
        assert_eq!(d, vec![NodeId { level: 2, index: 1 }, NodeId { level: 1, index: 3 }]);
        assert_eq!((d[0].first(), d[0].last()), (1, 4));
        assert_eq!((d[1].first(), d[1].last()), (5, 6));
    }

    #[test]
    fn membership_bound_by_enumeration() {
        let mut t = TreeAggregator::new(8, ElementKind::Vector(1), 0.0, rng(1)).unwrap();
        for _ in 0..8 {
            t.feed(&[1.0]).unwrap();
        }
        // enumerate every node (ℓ, j) with j·2^ℓ ≤ 8 and count those holding each item
        for item in 1..=8 {
            let mut count = 0;
            for level in 0..4u32 {
                for index in 1..=(8usize >> level) {
                    if (NodeId { level, index }).contains(item) {
                        count += 1;
                    }
                }
            }
            assert_eq!(count, 4);
            assert_eq!(t.memberships(item), count);
        }
    }

    #[test]
    fn horizon_and_dimension_errors() {
        let mut t = TreeAggregator::new(2, ElementKind::Matrix(2), 0.0, rng(1)).unwrap();
        assert!(matches!(t.feed(&[1.0]), Err(DpError::DimensionMismatch { .. })));
        t.feed(&[0.0; 4]).unwrap();
        t.feed(&[0.0; 4]).unwrap();
        assert_eq!(t.feed(&[0.0; 4]), Err(DpError::HorizonExceeded(2)));
    }

    #[test]
    fn noise_is_frozen_and_matrix_noise_symmetric() {
        let mut t = TreeAggregator::new(16, ElementKind::Matrix(3), 0.7, rng(5)).unwrap();
        let item = SquareMatrix::outer(&[0.6, 0.0, 0.8]);
        for _ in 0..11 {
            t.feed(item.as_slice()).unwrap();
        }
        let a = t.release_matrix(11).unwrap();
        let b = t.release_matrix(11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_symmetric());
        let noise = SquareMatrix::from_row_major(3, t.release_noise(11).unwrap());
        assert!(noise.max_abs() > 0.0);
        // exact part + noise part reproduce the release
        let mut exact = item.clone();
        exact.scale(11.0);
        exact.add_assign(&noise);
        for (x, y) in exact.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_noise() {
        let build = || {
            let mut t = TreeAggregator::new(8, ElementKind::Vector(2), 1.0, rng(9)).unwrap();
            for i in 0..7 {
                t.feed(&[i as f64, 1.0]).unwrap();
            }
            t.release(7).unwrap()
        };
        assert_eq!(build(), build());
    }

    proptest! {
        #[test]
        fn exact_prefix_sums_without_noise(stream in proptest::collection::vec(-50i32..50, 1..64)) {
            let horizon = stream.len();
            let mut t = TreeAggregator::new(horizon, ElementKind::Vector(1), 0.0, rng(0)).unwrap();
            let mut prefix = 0.0;
            for (i, v) in stream.iter().enumerate() {
                t.feed(&[*v as f64]).unwrap();
                prefix += *v as f64;
                prop_assert_eq!(t.release(i + 1).unwrap()[0], prefix);
            }
        }

        #[test]
        fn draw_counts_match_decomposition(horizon in 1usize..=256) {
            let mut t = TreeAggregator::new(horizon, ElementKind::Vector(1), 0.0, rng(0)).unwrap();
            for _ in 0..horizon {
                t.feed(&[1.0]).unwrap();
            }
            let bound = tree_log_terms(horizon);
            for s in 1..=horizon {
                let used = t.draws_in_release(s).unwrap();
                prop_assert_eq!(used, s.count_ones() as usize);
                prop_assert!(used <= tree_log_terms(s));
                prop_assert!(t.memberships(s) <= bound);
            }
        }
    }
}
