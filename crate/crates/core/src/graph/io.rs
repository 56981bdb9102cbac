//! Dataset readers and the canonical JSONL writer.
//!
//! JSONL layout: one node record per line, `{"id": .., "text": .., "label": ..}`,
//! followed by one `{"edges": [[u, v], ...]}` line. An optional
//! `{"class_names": [...]}` line carries class names. The pair layout is a
//! directory holding `nodes.jsonl` (node records only), `edges.tsv`
//! (`u\tv` per line) and optionally `classes.txt` (one name per line).

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GraphError, TextAttributedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Single JSONL file with node records and an edges line.
    Jsonl,
    /// Directory with `nodes.jsonl` and `edges.tsv`.
    Pair,
}

/// A loaded graph plus the original id of every dense node id.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: TextAttributedGraph,
    pub original_ids: Vec<String>,
}

#[derive(Default)]
struct Builder {
    ids: HashMap<String, usize>,
    original_ids: Vec<String>,
    texts: Vec<String>,
    labels: Vec<Option<usize>>,
    raw_edges: Vec<(String, String)>,
    class_names: Option<Vec<String>>,
}

fn id_key(value: &Value) -> Option<String> {
    match value {
        Value::Number(n) if n.is_u64() || n.is_i64() => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> GraphError {
    GraphError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

impl Builder {
    fn node(&mut self, line: usize, obj: &serde_json::Map<String, Value>) -> Result<(), GraphError> {
        let id = obj
            .get("id")
            .and_then(id_key)
            .ok_or_else(|| malformed(line, "missing or non-scalar \"id\""))?;
        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed(line, "missing string \"text\""))?;
        let label = match obj.get("label") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_u64()
                    .ok_or_else(|| malformed(line, "\"label\" must be a non-negative integer or null"))?
                    as usize,
            ),
        };
        if self.ids.contains_key(&id) {
            return Err(GraphError::DuplicateNodeId(id));
        }
        self.ids.insert(id.clone(), self.texts.len());
        self.original_ids.push(id);
        self.texts.push(text.to_owned());
        self.labels.push(label);
        Ok(())
    }

    fn edges(&mut self, line: usize, edges: &Value) -> Result<(), GraphError> {
        let list = edges
            .as_array()
            .ok_or_else(|| malformed(line, "\"edges\" must be an array"))?;
        for pair in list {
            let (u, v) = match pair.as_array().map(Vec::as_slice) {
                Some([u, v]) => (id_key(u), id_key(v)),
                _ => (None, None),
            };
            match (u, v) {
                (Some(u), Some(v)) => self.raw_edges.push((u, v)),
                _ => return Err(malformed(line, "edge must be a [u, v] pair")),
            }
        }
        Ok(())
    }

    fn class_names(&mut self, line: usize, names: &Value) -> Result<(), GraphError> {
        let names = names
            .as_array()
            .and_then(|a| a.iter().map(|v| v.as_str().map(str::to_owned)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| malformed(line, "\"class_names\" must be an array of strings"))?;
        self.class_names = Some(names);
        Ok(())
    }

    fn record(&mut self, line: usize, raw: &str, allow_edges: bool) -> Result<(), GraphError> {
        if raw.trim().is_empty() {
            return Ok(());
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| malformed(line, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed(line, "record must be a JSON object"))?;
        if let Some(edges) = obj.get("edges") {
            if !allow_edges {
                return Err(malformed(line, "edges belong in edges.tsv for the pair format"));
            }
            return self.edges(line, edges);
        }
        if let Some(names) = obj.get("class_names") {
            return self.class_names(line, names);
        }
        self.node(line, obj)
    }

    fn finish(self) -> Result<LoadedGraph, GraphError> {
        let mut edges = Vec::with_capacity(self.raw_edges.len());
        for (u, v) in self.raw_edges {
            match (self.ids.get(&u), self.ids.get(&v)) {
                (Some(&a), Some(&b)) => edges.push((a, b)),
                _ => return Err(GraphError::DanglingEdge { u, v }),
            }
        }
        let labeled = self.labels.iter().filter(|l| l.is_some()).count();
        let labels = if labeled == 0 {
            None
        } else if labeled == self.labels.len() {
            Some(self.labels.into_iter().flatten().collect())
        } else {
            return Err(GraphError::Invalid(format!(
                "{labeled} of {} nodes are labeled; labels must be all present or all null",
                self.labels.len()
            )));
        };
        let graph = TextAttributedGraph::new(self.texts, edges, labels, self.class_names)?;
        Ok(LoadedGraph {
            graph,
            original_ids: self.original_ids,
        })
    }
}

fn read_jsonl_into(builder: &mut Builder, path: &Path, allow_edges: bool) -> Result<(), GraphError> {
    let reader = BufReader::new(fs::File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        builder.record(idx + 1, &line?, allow_edges)?;
    }
    Ok(())
}

/// Load a dataset. `path` is the JSONL file for [`DatasetFormat::Jsonl`] and
/// the directory for [`DatasetFormat::Pair`].
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LoadedGraph, GraphError> {
    let mut builder = Builder::default();
    match format {
        DatasetFormat::Jsonl => read_jsonl_into(&mut builder, path, true)?,
        DatasetFormat::Pair => {
            read_jsonl_into(&mut builder, &path.join("nodes.jsonl"), false)?;
            let edges = BufReader::new(fs::File::open(path.join("edges.tsv"))?);
            for (idx, line) in edges.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut cols = line.split('\t');
                match (cols.next(), cols.next(), cols.next()) {
                    (Some(u), Some(v), None) => builder
                        .raw_edges
                        .push((u.trim().to_owned(), v.trim().to_owned())),
                    _ => return Err(malformed(idx + 1, "expected \"u\\tv\"")),
                }
            }
            let classes = path.join("classes.txt");
            if classes.exists() {
                let names = fs::read_to_string(classes)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_owned)
                    .collect();
                builder.class_names = Some(names);
            }
        }
    }
    builder.finish()
}

#[derive(Serialize)]
struct NodeLine<'a> {
    id: usize,
    text: &'a str,
    label: Option<usize>,
}

pub(super) fn write_canonical(graph: &TextAttributedGraph, out: &mut impl Write) -> std::io::Result<()> {
    for (id, text) in graph.texts().iter().enumerate() {
        let line = NodeLine {
            id,
            text,
            label: graph.labels().map(|l| l[id]),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    if let Some(names) = graph.class_names() {
        serde_json::to_writer(&mut *out, &serde_json::json!({ "class_names": names }))?;
        out.write_all(b"\n")?;
    }
    let edges: Vec<[usize; 2]> = graph.edges().iter().map(|&(u, v)| [u, v]).collect();
    serde_json::to_writer(&mut *out, &serde_json::json!({ "edges": edges }))?;
    out.write_all(b"\n")
}

/// Write `graph` in the canonical JSONL layout with dense ids.
pub fn save_jsonl(graph: &TextAttributedGraph, path: &Path) -> Result<(), GraphError> {
    let mut buf = Vec::new();
    write_canonical(graph, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Sidecar `original_id\tdense_id` mapping.
pub fn write_id_map(original_ids: &[String], path: &Path) -> Result<(), GraphError> {
    let mut out = String::new();
    for (dense, original) in original_ids.iter().enumerate() {
        out.push_str(original);
        out.push('\t');
        out.push_str(&dense.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
