use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GraphError, TextAttributedGraph};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2 }
    }
}

/// Disjoint train/val/test node sets covering every node. Each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn num_nodes(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Random split with `round(train·n)` train nodes, `round(val·n)` validation
/// nodes and the remainder as test nodes. Depends only on `(n, seed)`.
pub fn make_random_split(
    graph: &TextAttributedGraph,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, GraphError> {
    graph.require_labels()?;
    split_nodes(graph.num_nodes(), ratios, seed)
}

/// Split of `0..n` without a graph; same draws as [`make_random_split`].
pub fn split_nodes(n: usize, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment, GraphError> {
    if n < 5 {
        return Err(GraphError::TooFewNodes(n));
    }
    if !(ratios.train > 0.0 && ratios.val >= 0.0 && ratios.train + ratios.val < 1.0) {
        return Err(GraphError::Invalid(format!("bad split ratios {ratios:?}")));
    }
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_val = ((ratios.val * n as f64).round() as usize).min(n - n_train);

    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut seed::rng(seed, &[seed::stream::SPLIT]));
    let take = |range: std::ops::Range<usize>| {
        let mut part = ids[range].to_vec();
        part.sort_unstable();
        part
    };
    Ok(SplitAssignment {
        seed,
        train: take(0..n_train),
        val: take(n_train..n_train + n_val),
        test: take(n_train + n_val..n),
    })
}
