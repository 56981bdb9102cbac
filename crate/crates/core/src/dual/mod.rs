//! Two-layer LLM protocol.
//!
//! A knowledge-base LLM, told the true label of a training node, explains
//! from the node's own text and one neighbor's text why the node has that
//! label ([`generate_kb_records`]). Those explanations become the finetuning
//! corpus of an extraction LLM ([`emit_finetune_corpus`]), which is then asked,
//! without labels, for one message per directed edge ([`extract_messages`]).
//! [`self_loop_enhance`] adds single-node messages so isolated nodes still get
//! one.

mod corpus;
mod extract;
mod kb;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{emit_finetune_corpus, read_corpus, write_corpus, CorpusMeta, CorpusRecord, FinetuneCorpus, Provenance};
pub use extract::{extract_messages, self_loop_enhance, self_loop_targets, ExtractOutcome, MessageSet, SelfLoopMode};
pub use kb::{generate_kb_records, sample_kb_nodes, KbOutcome, KbRecord};

use crate::gateway::{GatewayError, TemplateError};
use crate::graph::{GraphError, TextAttributedGraph};
use crate::text::clip;

pub const DEFAULT_TEXT_BUDGET: usize = 2000;

#[derive(Debug, Error)]
pub enum DualError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("requested {count} knowledge-base nodes but only {available} candidates exist")]
    CountExceedsTrain { count: usize, available: usize },
    #[error("node {0} has no sampled neighbors and self-loop fallback is disabled")]
    EmptyNeighborhood(usize),
    #[error("graph has no class names or labels to build prompts from")]
    MissingClasses,
    #[error("finetune corpus is empty")]
    EmptyCorpus,
    #[error("line {line}: {reason}")]
    MalformedCorpus { line: usize, reason: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A pair the backend could not answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub i: usize,
    pub j: usize,
    pub error: String,
    /// The backend was unreachable rather than answering badly.
    #[serde(default)]
    pub exhausted: bool,
}

impl PairFailure {
    pub fn from_error(i: usize, j: usize, error: &GatewayError) -> Self {
        Self {
            i,
            j,
            error: error.to_string(),
            exhausted: error.is_exhausted(),
        }
    }

    pub fn empty_response(i: usize, j: usize) -> Self {
        Self {
            i,
            j,
            error: "empty response".into(),
            exhausted: false,
        }
    }
}

/// Comma-separated class names, in class-index order.
pub fn class_list(graph: &TextAttributedGraph) -> String {
    (0..graph.num_classes())
        .map(|c| graph.class_name(c))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Bindings for a prompt about node `a` (and neighbor `b`): clipped texts,
/// the class list and, when given, the label name.
pub fn node_bindings(
    graph: &TextAttributedGraph,
    a: usize,
    b: Option<usize>,
    label_name: Option<&str>,
    text_budget: usize,
) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("text_a".to_owned(), clip(graph.text(a), text_budget).to_owned());
    if let Some(b) = b {
        map.insert("text_b".to_owned(), clip(graph.text(b), text_budget).to_owned());
    }
    if let Some(name) = label_name {
        map.insert("label_name".to_owned(), name.to_owned());
    }
    map.insert("class_list".to_owned(), class_list(graph));
    map
}
