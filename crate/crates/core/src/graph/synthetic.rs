//! Planted-partition text-attributed graphs for offline runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GraphError, TextAttributedGraph};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// One keyword list per class; its length fixes the class count.
    pub keywords: Vec<Vec<String>>,
    pub filler_vocab: Vec<String>,
    pub words_per_node: usize,
    pub seed: u64,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
}

/// Nodes are laid out class-major: node `c·m + r` belongs to class `c`.
///
/// Every unordered pair is an edge independently with probability `p_in`
/// (same class) or `p_out` (different classes). A node's text is
/// `words_per_node` filler words drawn uniformly from `filler_vocab` with one
/// keyword of its class inserted twice at random positions.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<TextAttributedGraph, GraphError> {
    for p in [params.p_in, params.p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidProbability(p));
        }
    }
    if params.keywords.is_empty() || params.keywords.iter().any(Vec::is_empty) {
        return Err(GraphError::Invalid("every class needs at least one keyword".into()));
    }
    if params.words_per_node > 0 && params.filler_vocab.is_empty() {
        return Err(GraphError::Invalid("filler vocabulary is empty".into()));
    }
    let classes = params.keywords.len();
    let m = params.nodes_per_class;
    let n = classes * m;
    let labels: Vec<usize> = (0..n).map(|i| i / m.max(1)).collect();

    let texts = (0..n)
        .map(|node| {
            let mut rng = seed::rng(params.seed, &[seed::stream::SYNTH, 1, node as u64]);
            let mut words: Vec<&str> = (0..params.words_per_node)
                .map(|_| params.filler_vocab[rng.gen_range(0..params.filler_vocab.len())].as_str())
                .collect();
            let pool = &params.keywords[labels[node]];
            let keyword = pool[rng.gen_range(0..pool.len())].as_str();
            for _ in 0..2 {
                let at = rng.gen_range(0..=words.len());
                words.insert(at, keyword);
            }
            words.join(" ")
        })
        .collect();

    let mut rng = seed::rng(params.seed, &[seed::stream::SYNTH, 2]);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { params.p_in } else { params.p_out };
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let class_names = Some(
        params
            .class_names
            .clone()
            .unwrap_or_else(|| (0..classes).map(|c| format!("cat{c}")).collect()),
    );
    TextAttributedGraph::new(texts, edges, Some(labels), class_names)
}

impl SyntheticParams {
    /// Generated vocabulary: filler words `w0..` and class keywords `k{c}x{i}`.
    pub fn with_generated_vocab(
        num_classes: usize,
        nodes_per_class: usize,
        p_in: f64,
        p_out: f64,
        keywords_per_class: usize,
        filler_vocab_size: usize,
        words_per_node: usize,
        seed: u64,
    ) -> Self {
        Self {
            nodes_per_class,
            p_in,
            p_out,
            keywords: (0..num_classes)
                .map(|c| (0..keywords_per_class).map(|i| format!("k{c}x{i}")).collect())
                .collect(),
            filler_vocab: (0..filler_vocab_size).map(|i| format!("w{i}")).collect(),
            words_per_node,
            seed,
            class_names: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p_in: f64, p_out: f64) -> SyntheticParams {
        SyntheticParams::with_generated_vocab(2, 100, p_in, p_out, 5, 50, 10, 42)
    }

    fn intra_inter(g: &TextAttributedGraph) -> (usize, usize) {
        let labels = g.labels().unwrap();
        g.edges()
            .iter()
            .fold((0, 0), |(a, b), &(u, v)| if labels[u] == labels[v] { (a + 1, b) } else { (a, b + 1) })
    }

    #[test]
    fn degenerate_probabilities_give_two_cliques() {
        let g = generate_synthetic(&params(1.0, 0.0)).unwrap();
        assert_eq!(intra_inter(&g), (2 * 4950, 0));
        assert!(g.adjacency().iter().all(|l| l.len() == 99));
    }

    #[test]
    fn zero_probabilities_give_isolated_nodes() {
        let g = generate_synthetic(&params(0.0, 0.0)).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.num_nodes(), 200);
    }

    #[test]
    fn intra_edge_count_within_three_sigma() {
        // 2 classes x C(100, 2) intra pairs at p = 0.05: mean 495, sd sqrt(9900*0.05*0.95).
        let g = generate_synthetic(&params(0.05, 0.01)).unwrap();
        let (intra, inter) = intra_inter(&g);
        let sd = (9900.0f64 * 0.05 * 0.95).sqrt();
        assert!((intra as f64 - 495.0).abs() <= 3.0 * sd, "{intra}");
        let sd_out = (10000.0f64 * 0.01 * 0.99).sqrt();
        assert!((inter as f64 - 100.0).abs() <= 3.0 * sd_out, "{inter}");
    }

    #[test]
    fn texts_carry_two_class_keywords() {
        let p = params(0.0, 0.0);
        let g = generate_synthetic(&p).unwrap();
        for (node, text) in g.texts().iter().enumerate() {
            let words: Vec<&str> = text.split(' ').collect();
            assert_eq!(words.len(), p.words_per_node + 2);
            let class = g.labels().unwrap()[node];
            let hits = words.iter().filter(|w| p.keywords[class].iter().any(|k| k == *w)).count();
            assert_eq!(hits, 2);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_synthetic(&params(0.05, 0.01)).unwrap();
        assert_eq!(a, generate_synthetic(&params(0.05, 0.01)).unwrap());
        let mut other = params(0.05, 0.01);
        other.seed = 43;
        assert_ne!(a, generate_synthetic(&other).unwrap());
    }

    #[test]
    fn invalid_probability_is_rejected() {
        assert!(matches!(
            generate_synthetic(&params(1.5, 0.0)),
            Err(GraphError::InvalidProbability(_))
        ));
    }
}
