//! Instruction-tuning corpus files.
//!
//! One JSON object per line, `{"instruction", "input", "output", "meta":
//! {"i", "j"}}`, preceded by a single `#`-prefixed header line holding the
//! provenance as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{node_bindings, DualError, KbRecord};
use crate::gateway::{TemplateId, TemplateSet};
use crate::graph::TextAttributedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub meta: CorpusMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub template_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneCorpus {
    pub records: Vec<CorpusRecord>,
    pub provenance: Provenance,
}

/// One extraction-LLM training record per knowledge-base record: the I_E
/// instruction, the `(i, j)` pair layout as input, the knowledge-base answer
/// as target. Records are ordered by `(i, j)`.
pub fn emit_finetune_corpus(
    records: &[KbRecord],
    graph: &TextAttributedGraph,
    templates: &TemplateSet,
    text_budget: usize,
    provenance: Provenance,
) -> Result<FinetuneCorpus, DualError> {
    if records.is_empty() {
        return Err(DualError::EmptyCorpus);
    }
    let mut out = records
        .iter()
        .map(|r| {
            let prompt = templates.render(
                TemplateId::Extract,
                node_bindings(graph, r.source, Some(r.neighbor), None, text_budget),
            )?;
            Ok(CorpusRecord {
                instruction: prompt.instruction,
                input: prompt.input,
                output: r.output_text.clone(),
                meta: CorpusMeta {
                    i: r.source,
                    j: r.neighbor,
                },
            })
        })
        .collect::<Result<Vec<_>, DualError>>()?;
    out.sort_by_key(|r| r.meta);
    Ok(FinetuneCorpus {
        records: out,
        provenance,
    })
}

pub fn write_corpus(records: &[CorpusRecord], provenance: &Provenance, path: &Path) -> Result<(), DualError> {
    let mut buf = b"# ".to_vec();
    serde_json::to_writer(&mut buf, provenance).map_err(std::io::Error::from)?;
    buf.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(std::io::Error::from)?;
        buf.write_all(b"\n")?;
    }
    fs::write(path, buf)?;
    Ok(())
}

impl FinetuneCorpus {
    pub fn write(&self, path: &Path) -> Result<(), DualError> {
        write_corpus(&self.records, &self.provenance, path)
    }
}

pub fn read_corpus(path: &Path) -> Result<FinetuneCorpus, DualError> {
    let text = fs::read_to_string(path)?;
    let mut provenance = Provenance::default();
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let malformed = |reason: String| DualError::MalformedCorpus { line: idx + 1, reason };
        if let Some(header) = line.strip_prefix('#') {
            provenance = serde_json::from_str(header.trim()).map_err(|e| malformed(e.to_string()))?;
        } else if !line.trim().is_empty() {
            records.push(serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?);
        }
    }
    Ok(FinetuneCorpus { records, provenance })
}
