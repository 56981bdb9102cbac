//! Deterministic stand-ins for the edge-predictor and extraction LLMs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// "True" iff the two nodes share a label.
    Ep,
    /// Category statement plus shared evidence tokens.
    Extract,
}

/// Hidden knowledge the oracles may consult.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleContext {
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    /// Per-class keyword lists; when present the extraction oracle infers
    /// the category of node A from its text instead of reading its label.
    pub class_keywords: Option<Vec<Vec<String>>>,
}

/// Which nodes a request is about, plus the bindings used to render it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OracleHint {
    pub node_a: usize,
    pub node_b: Option<usize>,
    pub bindings: BTreeMap<String, String>,
}

impl OracleContext {
    fn label(&self, node: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.get(node).copied())
    }

    fn class_name(&self, c: usize) -> String {
        self.class_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| format!("class {c}"))
    }

    /// Class whose keywords occur most often in `text`; ties go to the lower
    /// class index. `None` when no keyword occurs.
    fn infer_class(&self, text: &str) -> Option<usize> {
        let keywords = self.class_keywords.as_ref()?;
        let sets: Vec<BTreeSet<String>> = keywords
            .iter()
            .map(|ks| ks.iter().map(|k| k.to_lowercase()).collect())
            .collect();
        let mut counts = vec![0usize; sets.len()];
        for tok in tokenize(text) {
            for (c, set) in sets.iter().enumerate() {
                if set.contains(&tok) {
                    counts[c] += 1;
                }
            }
        }
        let (best, &hits) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (hits > 0).then_some(best)
    }
}

/// Answer a request the way the configured oracle would.
///
/// The extraction oracle names a category taken, in order of preference, from
/// the `label_name` binding, from keyword inference over `text_a`, or from
/// node A's hidden label.
pub fn oracle_answer(kind: OracleKind, hint: &OracleHint, ctx: &OracleContext) -> Result<String, GatewayError> {
    match kind {
        OracleKind::Ep => {
            let b = hint
                .node_b
                .ok_or_else(|| GatewayError::OracleNeedsLabels("edge oracle needs a node pair".into()))?;
            match (ctx.label(hint.node_a), ctx.label(b)) {
                (Some(la), Some(lb)) => Ok(if la == lb { "True" } else { "False" }.to_owned()),
                _ => Err(GatewayError::OracleNeedsLabels(format!(
                    "labels for nodes {} and {b}",
                    hint.node_a
                ))),
            }
        }
        OracleKind::Extract => {
            let text_a = hint.bindings.get("text_a").map(String::as_str).unwrap_or("");
            let label_name = match hint.bindings.get("label_name") {
                Some(name) => name.clone(),
                None => ctx
                    .infer_class(text_a)
                    .or_else(|| ctx.label(hint.node_a))
                    .map(|c| ctx.class_name(c))
                    .ok_or_else(|| {
                        GatewayError::OracleNeedsLabels(format!(
                            "no label name, keyword match or label for node {}",
                            hint.node_a
                        ))
                    })?,
            };
            let text_b = hint.bindings.get("text_b").map(String::as_str).unwrap_or("");
            Ok(extract_message(&label_name, text_a, text_b))
        }
    }
}

/// `This node belongs to category {label}. Shared evidence: {tokens}.` where
/// tokens are the three lexically smallest tokens common to both texts, or
/// `NONE`.
pub fn extract_message(label_name: &str, text_a: &str, text_b: &str) -> String {
    let a: BTreeSet<String> = tokenize(text_a).collect();
    let b: BTreeSet<String> = tokenize(text_b).collect();
    let shared: Vec<&str> = a.intersection(&b).take(3).map(String::as_str).collect();
    let evidence = if shared.is_empty() {
        "NONE".to_owned()
    } else {
        shared.join(", ")
    };
    format!("This node belongs to category {label_name}. Shared evidence: {evidence}.")
}
