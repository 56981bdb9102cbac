//! Text-attributed graph data model.
//!
//! Node ids are dense integers `0..n`. Edges are stored undirected and
//! canonical (`u < v`, sorted, deduplicated, no self-loops); per-node
//! neighborhoods handed to the LLM stages are directional and live in
//! [`sample::SampledNeighborhoods`].

mod io;
mod sample;
mod split;
mod synthetic;

pub use io::{load_dataset, save_jsonl, write_id_map, DatasetFormat, LoadedGraph};
pub use sample::{sample_edges, EdgeCap, SampledNeighborhoods, SamplingMode};
pub use split::{make_random_split, split_nodes, SplitAssignment, SplitRatios};
pub use synthetic::{generate_synthetic, SyntheticParams};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("edge ({u}, {v}) references an unknown node id")]
    DanglingEdge { u: String, v: String },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(String),
    #[error("graph has no labels")]
    MissingLabels,
    #[error("split needs at least 5 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    texts: Vec<String>,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<usize>>,
    class_names: Option<Vec<String>>,
}

impl TextAttributedGraph {
    /// Build a graph, canonicalizing the edge list. Self-loops are dropped and
    /// `(u, v)` / `(v, u)` collapse into one undirected edge.
    pub fn new(
        texts: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self, GraphError> {
        let n = texts.len();
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::DanglingEdge {
                    u: u.to_string(),
                    v: v.to_string(),
                });
            }
            if u != v {
                canonical.push((u.min(v), u.max(v)));
            }
        }
        canonical.sort_unstable();
        canonical.dedup();

        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(GraphError::Invalid(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
            if let Some(names) = &class_names {
                if let Some(bad) = labels.iter().find(|&&l| l >= names.len()) {
                    return Err(GraphError::Invalid(format!(
                        "label {bad} out of range for {} classes",
                        names.len()
                    )));
                }
            }
        }
        Ok(Self {
            texts,
            edges: canonical,
            labels,
            class_names,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.texts.len()
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn text(&self, node: usize) -> &str {
        &self.texts[node]
    }

    /// Canonical undirected edges, `u < v`, ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize], GraphError> {
        self.labels().ok_or(GraphError::MissingLabels)
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        match (&self.class_names, &self.labels) {
            (Some(names), _) => names.len(),
            (None, Some(labels)) => labels.iter().max().map_or(0, |m| m + 1),
            (None, None) => 0,
        }
    }

    /// Human-readable name of class `c`; falls back to `"class {c}"`.
    pub fn class_name(&self, c: usize) -> String {
        self.class_names
            .as_ref()
            .and_then(|names| names.get(c).cloned())
            .unwrap_or_else(|| format!("class {c}"))
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// SHA-256 of the canonical JSONL serialization, hex encoded.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        io::write_canonical(self, &mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}
