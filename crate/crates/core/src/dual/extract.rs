use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{node_bindings, DualError, PairFailure};
use crate::gateway::{ChatRequest, Gateway, TemplateId, TemplateSet};
use crate::graph::{SampledNeighborhoods, TextAttributedGraph};

/// Extracted messages keyed by directed pair `(i, j)`: the text node `i`
/// receives about its neighbor `j`. Self entries `(i, i)` come from
/// self-loop enhancement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageSet {
    messages: BTreeMap<(usize, usize), String>,
}

#[derive(Serialize, Deserialize)]
struct MessageLine<'a> {
    i: usize,
    j: usize,
    text: std::borrow::Cow<'a, str>,
}

impl MessageSet {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&str> {
        self.messages.get(&(i, j)).map(String::as_str)
    }

    /// Empty texts are ignored.
    pub fn insert(&mut self, i: usize, j: usize, text: String) {
        if !text.is_empty() {
            self.messages.insert((i, j), text);
        }
    }

    pub fn extend(&mut self, other: MessageSet) {
        self.messages.extend(other.messages);
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &str)> {
        self.messages.iter().map(|(&k, v)| (k, v.as_str()))
    }

    /// Messages received by node `i`, ascending by `j`.
    pub fn incoming(&self, i: usize) -> Vec<(usize, &str)> {
        self.messages
            .range((i, 0)..=(i, usize::MAX))
            .map(|(&(_, j), v)| (j, v.as_str()))
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), DualError> {
        let mut buf = Vec::new();
        for (&(i, j), text) in &self.messages {
            serde_json::to_writer(&mut buf, &MessageLine { i, j, text: text.into() }).map_err(std::io::Error::from)?;
            buf.write_all(b"\n")?;
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, DualError> {
        let mut set = Self::default();
        for (idx, line) in fs::read_to_string(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let m: MessageLine = serde_json::from_str(line).map_err(|e| DualError::MalformedCorpus {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            set.insert(m.i, m.j, m.text.into_owned());
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractOutcome {
    pub messages: MessageSet,
    /// Pairs without a usable answer. Non-empty means the set is incomplete.
    pub gaps: Vec<PairFailure>,
}

fn collect(pairs: &[(usize, usize)], requests: &[ChatRequest], gateway: &Gateway) -> ExtractOutcome {
    let mut out = ExtractOutcome::default();
    for (&(i, j), response) in pairs.iter().zip(gateway.complete_many(requests)) {
        match response {
            Ok(r) if !r.text.is_empty() => out.messages.insert(i, j, r.text),
            Ok(_) => out.gaps.push(PairFailure::empty_response(i, j)),
            Err(e) => out.gaps.push(PairFailure::from_error(i, j, &e)),
        }
    }
    out
}

/// One message per directed pair from the extraction LLM. Failed pairs are
/// reported in `gaps` and left out of the set.
pub fn extract_messages(
    graph: &TextAttributedGraph,
    pairs: impl IntoIterator<Item = (usize, usize)>,
    gateway: &Gateway,
    templates: &TemplateSet,
    text_budget: usize,
) -> Result<ExtractOutcome, DualError> {
    let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
    pairs.sort_unstable();
    pairs.dedup();
    let requests = pairs
        .iter()
        .map(|&(i, j)| {
            let prompt = templates.render(TemplateId::Extract, node_bindings(graph, i, Some(j), None, text_budget))?;
            Ok(gateway.request(&prompt, i, Some(j)))
        })
        .collect::<Result<Vec<_>, DualError>>()?;
    Ok(collect(&pairs, &requests, gateway))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfLoopMode {
    #[default]
    Off,
    /// Only nodes whose (filtered) list is empty.
    FallbackOnly,
    /// Every node.
    Full,
}

/// Nodes that receive a self message under `mode`.
pub fn self_loop_targets(mode: SelfLoopMode, neighborhoods: &SampledNeighborhoods) -> Vec<usize> {
    match mode {
        SelfLoopMode::Off => Vec::new(),
        SelfLoopMode::FallbackOnly => neighborhoods
            .lists
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_empty())
            .map(|(i, _)| i)
            .collect(),
        SelfLoopMode::Full => (0..neighborhoods.lists.len()).collect(),
    }
}

/// Self messages `(i, i)` generated from each node's own text.
pub fn self_loop_enhance(
    graph: &TextAttributedGraph,
    nodes: &[usize],
    gateway: &Gateway,
    templates: &TemplateSet,
    text_budget: usize,
) -> Result<ExtractOutcome, DualError> {
    let pairs: Vec<(usize, usize)> = nodes.iter().map(|&i| (i, i)).collect();
    let requests = nodes
        .iter()
        .map(|&i| {
            let prompt = templates.render(TemplateId::SelfLoop, node_bindings(graph, i, None, None, text_budget))?;
            Ok(gateway.request(&prompt, i, None))
        })
        .collect::<Result<Vec<_>, DualError>>()?;
    Ok(collect(&pairs, &requests, gateway))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendConfig, BackendKind, OracleContext};
    use crate::graph::{generate_synthetic, sample_edges, EdgeCap, SamplingMode, SyntheticParams};

    fn small() -> TextAttributedGraph {
        TextAttributedGraph::new(
            vec!["a b".into(), "b c".into(), "c d".into(), "isolated".into()],
            [(0, 1), (1, 2)],
            Some(vec![0, 0, 1, 1]),
            None,
        )
        .unwrap()
    }

    fn hoods(g: &TextAttributedGraph) -> SampledNeighborhoods {
        sample_edges(g, EdgeCap::Unlimited, 0, SamplingMode::Directional)
    }

    #[test]
    fn fixed_backend_fills_every_pair() {
        let g = small();
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(BackendConfig::fixed("X", dir.path()), OracleContext::default()).unwrap();
        let out = extract_messages(&g, hoods(&g).pairs(), &gw, &TemplateSet::default(), 2000).unwrap();
        assert_eq!(out.messages.len(), 4);
        assert!(out.messages.iter().all(|(_, t)| t == "X"));
        assert!(out.gaps.is_empty());
        // Node 3 has no neighbors and therefore no messages.
        assert!(out.messages.incoming(3).is_empty());
        assert_eq!(out.messages.incoming(1), vec![(0, "X"), (2, "X")]);
    }

    #[test]
    fn oracle_messages_name_the_true_class() {
        let params = SyntheticParams::with_generated_vocab(3, 20, 0.3, 0.05, 4, 30, 8, 5);
        let g = generate_synthetic(&params).unwrap();
        let ctx = OracleContext {
            labels: None,
            class_names: g.class_names().unwrap().to_vec(),
            class_keywords: Some(params.keywords.clone()),
        };
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(BackendConfig::new(BackendKind::OracleExtract, dir.path()), ctx).unwrap();
        let h = sample_edges(&g, EdgeCap::Limited(2), 1, SamplingMode::Directional);
        let out = extract_messages(&g, h.pairs(), &gw, &TemplateSet::default(), 2000).unwrap();
        assert_eq!(out.messages.len(), h.num_pairs());
        for ((i, _), text) in out.messages.iter() {
            let name = g.class_name(g.labels().unwrap()[i]);
            assert!(text.starts_with(&format!("This node belongs to category {name}.")), "{text}");
        }
    }

    #[test]
    fn failures_become_gaps() {
        let g = small();
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(BackendConfig::new(BackendKind::Replay, dir.path()), OracleContext::default()).unwrap();
        let out = extract_messages(&g, hoods(&g).pairs(), &gw, &TemplateSet::default(), 2000).unwrap();
        assert!(out.messages.is_empty());
        assert_eq!(out.gaps.len(), 4);
    }

    #[test]
    fn self_loop_modes() {
        let g = small();
        let h = hoods(&g);
        assert!(self_loop_targets(SelfLoopMode::Off, &h).is_empty());
        assert_eq!(self_loop_targets(SelfLoopMode::FallbackOnly, &h), vec![3]);
        assert_eq!(self_loop_targets(SelfLoopMode::Full, &h), vec![0, 1, 2, 3]);

        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(BackendConfig::fixed("self", dir.path()), OracleContext::default()).unwrap();
        let t = TemplateSet::default();
        let fallback = self_loop_enhance(&g, &self_loop_targets(SelfLoopMode::FallbackOnly, &h), &gw, &t, 2000).unwrap();
        assert_eq!(fallback.messages.len(), 1);
        assert_eq!(fallback.messages.get(3, 3), Some("self"));
        let all = self_loop_enhance(&g, &self_loop_targets(SelfLoopMode::Full, &h), &gw, &t, 2000).unwrap();
        assert_eq!(all.messages.len(), 4);

        // No isolated nodes: fallback adds nothing.
        let connected = TextAttributedGraph::new(vec!["a".into(), "b".into()], [(0, 1)], None, None).unwrap();
        assert!(self_loop_targets(SelfLoopMode::FallbackOnly, &hoods(&connected)).is_empty());
    }

    #[test]
    fn message_set_round_trips() {
        let mut m = MessageSet::default();
        m.insert(2, 5, "with\nnewline".into());
        m.insert(0, 0, "self".into());
        m.insert(1, 1, String::new());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        m.write_jsonl(&p).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "{\"i\":0,\"j\":0,\"text\":\"self\"}\n{\"i\":2,\"j\":5,\"text\":\"with\\nnewline\"}\n"
        );
        assert_eq!(MessageSet::read_jsonl(&p).unwrap(), m);
    }
}
