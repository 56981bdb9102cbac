use std::collections::BTreeSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{node_bindings, DualError, PairFailure};
use crate::gateway::{Gateway, TemplateId, TemplateSet};
use crate::graph::{SampledNeighborhoods, TextAttributedGraph};
use crate::seed;

/// One knowledge-base answer: why `source` has label `label_name`, given its
/// text and the text of `neighbor`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbRecord {
    pub source: usize,
    pub neighbor: usize,
    pub label_name: String,
    pub output_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KbOutcome {
    /// Sorted by `(source, neighbor)`.
    pub records: Vec<KbRecord>,
    pub failures: Vec<PairFailure>,
}

/// Uniform sample of `count` distinct nodes from `candidates`, returned sorted.
pub fn sample_kb_nodes(candidates: &[usize], count: usize, seed_value: u64) -> Result<Vec<usize>, DualError> {
    if count > candidates.len() {
        return Err(DualError::CountExceedsTrain {
            count,
            available: candidates.len(),
        });
    }
    let mut rng = seed::rng(seed_value, &[seed::stream::KB_NODES]);
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Ask the knowledge-base LLM about every `(i, j)` with `i ∈ nodes` and `j` in
/// `i`'s list. A node with an empty list yields the self pair `(i, i)` when
/// `self_fallback` is set and fails with `EmptyNeighborhood` otherwise.
pub fn generate_kb_records(
    graph: &TextAttributedGraph,
    nodes: &[usize],
    neighborhoods: &SampledNeighborhoods,
    gateway: &Gateway,
    templates: &TemplateSet,
    self_fallback: bool,
    text_budget: usize,
) -> Result<KbOutcome, DualError> {
    let labels = graph.require_labels()?;
    let nodes: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut pairs = Vec::new();
    for &i in &nodes {
        let list = &neighborhoods.lists[i];
        if list.is_empty() {
            if !self_fallback {
                return Err(DualError::EmptyNeighborhood(i));
            }
            pairs.push((i, i));
        }
        pairs.extend(list.iter().map(|&j| (i, j)));
    }

    let mut requests = Vec::with_capacity(pairs.len());
    let mut names = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let name = graph.class_name(labels[i]);
        let prompt = templates.render(
            TemplateId::KnowledgeBase,
            node_bindings(graph, i, Some(j), Some(&name), text_budget),
        )?;
        requests.push(gateway.request(&prompt, i, Some(j)));
        names.push(name);
    }

    let mut outcome = KbOutcome::default();
    for ((&(i, j), name), response) in pairs.iter().zip(names).zip(gateway.complete_many(&requests)) {
        match response {
            Ok(r) if !r.text.trim().is_empty() => outcome.records.push(KbRecord {
                source: i,
                neighbor: j,
                label_name: name,
                output_text: r.text,
            }),
            Ok(_) => outcome.failures.push(PairFailure::empty_response(i, j)),
            Err(e) => outcome.failures.push(PairFailure::from_error(i, j, &e)),
        }
    }
    Ok(outcome)
}
