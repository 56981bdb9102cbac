//! Per-node edge sampling under a cap `k`.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TextAttributedGraph;
use crate::seed;

/// Maximum number of sampled neighbors per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeCap {
    Limited(usize),
    Unlimited,
}

impl EdgeCap {
    pub fn new(k: usize) -> Option<Self> {
        (k >= 1).then_some(Self::Limited(k))
    }

    pub fn allows(self, len: usize) -> usize {
        match self {
            Self::Limited(k) => len.min(k),
            Self::Unlimited => len,
        }
    }
}

impl fmt::Display for EdgeCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Limited(k) => write!(f, "{k}"),
            Self::Unlimited => f.write_str("inf"),
        }
    }
}

impl FromStr for EdgeCap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Self::Unlimited),
            other => other
                .parse::<usize>()
                .ok()
                .and_then(Self::new)
                .ok_or_else(|| format!("edge cap must be a positive integer or \"inf\", got {other:?}")),
        }
    }
}

impl Serialize for EdgeCap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Limited(k) => s.serialize_u64(*k as u64),
            Self::Unlimited => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for EdgeCap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            // Bare `inf` in TOML is a float.
            Float(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Float(f) if f == f64::INFINITY => Ok(Self::Unlimited),
            Raw::Float(f) if f.fract() == 0.0 && f >= 1.0 => Ok(Self::Limited(f as usize)),
            Raw::Float(f) => Err(serde::de::Error::custom(format!("invalid edge cap {f}"))),
            Raw::Int(k) => Self::new(k as usize).ok_or_else(|| serde::de::Error::custom("edge cap must be >= 1")),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How the cap is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each node draws its own list; `j ∈ list(i)` does not imply `i ∈ list(j)`.
    #[default]
    Directional,
    /// An undirected edge subset where every node keeps at most `k` edges;
    /// lists are symmetric.
    Symmetric,
}

/// Per-node sampled neighbor lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledNeighborhoods {
    pub cap: EdgeCap,
    pub seed: u64,
    pub lists: Vec<Vec<usize>>,
}

impl SampledNeighborhoods {
    /// Every directed pair `(i, j)` with `j` in `i`'s list, ascending.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lists
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&j| (i, j)))
    }

    pub fn num_pairs(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Rebuild neighborhoods from an arbitrary set of directed pairs.
    pub fn from_pairs(n: usize, cap: EdgeCap, seed: u64, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut lists = vec![Vec::new(); n];
        for (i, j) in pairs {
            lists[i].push(j);
        }
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
        }
        Self { cap, seed, lists }
    }
}

/// Sample at most `cap` neighbors per node.
///
/// In directional mode node `i` draws `min(cap, deg i)` neighbors uniformly
/// without replacement from a stream keyed by `(seed, i)`, so one node's draw
/// never depends on another node or on the input edge order.
pub fn sample_edges(graph: &TextAttributedGraph, cap: EdgeCap, seed: u64, mode: SamplingMode) -> SampledNeighborhoods {
    let adjacency = graph.adjacency();
    let lists = match (mode, cap) {
        (_, EdgeCap::Unlimited) => adjacency,
        (SamplingMode::Directional, EdgeCap::Limited(k)) => adjacency
            .into_iter()
            .enumerate()
            .map(|(node, neighbors)| {
                if neighbors.len() <= k {
                    return neighbors;
                }
                let mut rng = seed::rng(seed, &[seed::stream::SAMPLE, node as u64]);
                let mut picked: Vec<usize> = index::sample(&mut rng, neighbors.len(), k)
                    .into_iter()
                    .map(|idx| neighbors[idx])
                    .collect();
                picked.sort_unstable();
                picked
            })
            .collect(),
        (SamplingMode::Symmetric, EdgeCap::Limited(k)) => {
            let mut edges = graph.edges().to_vec();
            edges.shuffle(&mut seed::rng(seed, &[seed::stream::SAMPLE, u64::MAX]));
            let mut lists = vec![Vec::new(); graph.num_nodes()];
            for (u, v) in edges {
                if lists[u].len() < k && lists[v].len() < k {
                    lists[u].push(v);
                    lists[v].push(u);
                }
            }
            for list in &mut lists {
                list.sort_unstable();
            }
            lists
        }
    };
    SampledNeighborhoods { cap, seed, lists }
}
