//! Optional edge filter.
//!
//! An edge-predictor LLM sees the texts of a directed node pair and answers
//! `True` (same category, keep) or `False` (drop). This module builds that
//! model's finetuning corpus from training pairs and applies it to sampled
//! neighborhoods.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{node_bindings, CorpusMeta, CorpusRecord};
use crate::gateway::{Gateway, GatewayError, TemplateError, TemplateId, TemplateSet};
use crate::graph::{GraphError, SampledNeighborhoods, SplitAssignment, TextAttributedGraph};
use crate::seed;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("training set has {0} nodes; at least 2 are needed to form pairs")]
    TrainSetTooSmall(usize),
    #[error("n_pairs must be >= 1")]
    NoPairsRequested,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("edge predictor failed on pair ({i}, {j}): {source}")]
    Backend {
        i: usize,
        j: usize,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of building the edge-predictor corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EpCorpus {
    pub records: Vec<CorpusRecord>,
    /// Fraction of records whose output is `True`.
    pub true_fraction: f64,
}

/// Sample `n_pairs` ordered training pairs `(i, j)`, `i ≠ j`, uniformly with
/// replacement and label each `True` iff the two labels match.
pub fn build_ep_corpus(
    graph: &TextAttributedGraph,
    split: &SplitAssignment,
    templates: &TemplateSet,
    n_pairs: usize,
    text_budget: usize,
    seed_value: u64,
) -> Result<EpCorpus, FilterError> {
    let labels = graph.require_labels()?;
    if n_pairs == 0 {
        return Err(FilterError::NoPairsRequested);
    }
    let train = &split.train;
    if train.len() < 2 {
        return Err(FilterError::TrainSetTooSmall(train.len()));
    }
    let mut rng = seed::rng(seed_value, &[seed::stream::EP_PAIRS]);
    let mut records = Vec::with_capacity(n_pairs);
    let mut trues = 0usize;
    while records.len() < n_pairs {
        let i = train[rng.gen_range(0..train.len())];
        let j = train[rng.gen_range(0..train.len())];
        if i == j {
            continue;
        }
        let same = labels[i] == labels[j];
        trues += usize::from(same);
        let prompt = templates.render(TemplateId::EdgePredict, node_bindings(graph, i, Some(j), None, text_budget))?;
        records.push(CorpusRecord {
            instruction: prompt.instruction,
            input: prompt.input,
            output: if same { "True" } else { "False" }.to_owned(),
            meta: CorpusMeta { i, j },
        });
    }
    Ok(EpCorpus {
        true_fraction: trues as f64 / n_pairs as f64,
        records,
    })
}

/// How per-direction answers turn into kept pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// `(i, j)` is kept iff its own answer says so.
    #[default]
    Directed,
    /// Both directions are dropped if either submitted direction says False.
    Symmetric,
}

/// Parsed edge-predictor answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop,
    /// Neither literal; the pair is kept and the anomaly logged.
    Unparseable,
}

/// Trim, case-fold and compare the first token (stripped of surrounding
/// punctuation) against `true` / `false`.
pub fn parse_verdict(raw: &str) -> Verdict {
    let first = raw
        .split_whitespace()
        .next()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase());
    match first.as_deref() {
        Some("true") => Verdict::Keep,
        Some("false") => Verdict::Drop,
        _ => Verdict::Unparseable,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub i: usize,
    pub j: usize,
    pub raw: String,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredAdjacency {
    pub kept_pairs: BTreeSet<(usize, usize)>,
    /// One entry per submitted pair, ascending by `(i, j)`.
    pub decisions: Vec<FilterDecision>,
    /// Pairs whose answer was neither True nor False.
    pub anomalies: Vec<(usize, usize)>,
}

impl FilteredAdjacency {
    pub fn to_neighborhoods(&self, source: &SampledNeighborhoods) -> SampledNeighborhoods {
        SampledNeighborhoods::from_pairs(
            source.lists.len(),
            source.cap,
            source.seed,
            self.kept_pairs.iter().copied(),
        )
    }

    pub fn write_decisions(&self, path: &Path) -> Result<(), FilterError> {
        let mut out = Vec::new();
        for d in &self.decisions {
            serde_json::to_writer(&mut out, d).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Ask the edge predictor about every sampled directed pair.
pub fn apply_edge_filter(
    neighborhoods: &SampledNeighborhoods,
    graph: &TextAttributedGraph,
    gateway: &Gateway,
    templates: &TemplateSet,
    mode: FilterMode,
    text_budget: usize,
) -> Result<FilteredAdjacency, FilterError> {
    let pairs: Vec<(usize, usize)> = neighborhoods.pairs().collect();
    let requests = pairs
        .iter()
        .map(|&(i, j)| {
            let prompt = templates.render(TemplateId::EdgePredict, node_bindings(graph, i, Some(j), None, text_budget))?;
            Ok(gateway.request(&prompt, i, Some(j)))
        })
        .collect::<Result<Vec<_>, FilterError>>()?;
    let responses = gateway.complete_many(&requests);

    let mut verdicts = BTreeMap::new();
    let mut decisions = Vec::with_capacity(pairs.len());
    let mut anomalies = Vec::new();
    for (&(i, j), response) in pairs.iter().zip(responses) {
        let raw = response.map_err(|source| FilterError::Backend { i, j, source })?.text;
        let verdict = parse_verdict(&raw);
        if verdict == Verdict::Unparseable {
            log::warn!("unparseable edge verdict for ({i}, {j}): {raw:?}; keeping the pair");
            anomalies.push((i, j));
        }
        verdicts.insert((i, j), verdict);
        decisions.push(FilterDecision { i, j, raw, kept: false });
    }

    let kept = |i: usize, j: usize| -> bool {
        let own = verdicts[&(i, j)] != Verdict::Drop;
        match mode {
            FilterMode::Directed => own,
            FilterMode::Symmetric => own && verdicts.get(&(j, i)) != Some(&Verdict::Drop),
        }
    };
    let mut kept_pairs = BTreeSet::new();
    for d in &mut decisions {
        d.kept = kept(d.i, d.j);
        if d.kept {
            kept_pairs.insert((d.i, d.j));
        }
    }
    Ok(FilteredAdjacency {
        kept_pairs,
        decisions,
        anomalies,
    })
}
