use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DatasetConfig, EmbedderKind, FilterScope, RunConfig};
use super::{PipelineError, Stage};
use crate::dual::{
    emit_finetune_corpus, extract_messages, generate_kb_records, sample_kb_nodes, self_loop_enhance,
    self_loop_targets, KbRecord, MessageSet, PairFailure, Provenance, SelfLoopMode,
};
use crate::edge_filter::{apply_edge_filter, build_ep_corpus};
use crate::embed::{aggregate_all, hashing_matrix, EmbedService, EmbeddingMatrix};
use crate::gateway::{BackendConfig, Gateway, OracleContext, TemplateSet};
use crate::gnn::{
    evaluate, normalize_adjacency, render_table, train, CsrMatrix, DenseMatrix, ExperimentReport, GcnParams,
    ModelKind, TrainConfig,
};
use crate::graph::{
    generate_synthetic, load_dataset, make_random_split, sample_edges, save_jsonl, split_nodes, write_id_map,
    DatasetFormat, SampledNeighborhoods, SplitAssignment, TextAttributedGraph,
};

const MANIFEST: &str = "manifest.json";
const GRAPH_FILE: &str = "graph.jsonl";
const NEIGHBORHOODS: &str = "neighborhoods.json";
const EMBEDDINGS: &str = "embeddings.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    /// Output digest of every upstream stage this stage read, plus the
    /// config fingerprint.
    pub inputs: BTreeMap<String, String>,
    /// File name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    /// Requests that did not produce an answer. Non-empty means partial.
    pub gaps: Vec<PairFailure>,
    pub summary: serde_json::Value,
}

impl Manifest {
    /// Single digest over all outputs.
    pub fn output_digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(&self.outputs).expect("map serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    /// Inputs unchanged and outputs intact.
    UpToDate,
    /// Not part of this pipeline variant.
    Disabled,
    Partial { gaps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
}

impl std::fmt::Display for StageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.status {
            StageStatus::Ran => write!(f, "{}: done", self.stage),
            StageStatus::UpToDate => write!(f, "{}: skipped (up-to-date)", self.stage),
            StageStatus::Disabled => write!(f, "{}: skipped (disabled by config)", self.stage),
            StageStatus::Partial { gaps } => write!(f, "{}: partial ({gaps} gaps)", self.stage),
        }
    }
}

/// Stage outputs before they are written.
struct Output {
    files: Vec<(String, Vec<u8>)>,
    gaps: Vec<PairFailure>,
    summary: serde_json::Value,
}

impl Output {
    fn new(summary: serde_json::Value) -> Self {
        Self {
            files: Vec::new(),
            gaps: Vec::new(),
            summary,
        }
    }

    fn file(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.files.push((name.to_owned(), bytes));
        self
    }

    fn json(self, name: &str, value: &impl Serialize) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.file(name, bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunArtifact {
    run: usize,
    seed: u64,
    split: SplitAssignment,
    best_epoch: usize,
    epochs_run: usize,
    best_val_accuracy: f64,
    params: GcnParams,
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Corrupt {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Runs stages of one configuration inside its run directory.
#[derive(Debug)]
pub struct Pipeline {
    config: RunConfig,
    fingerprint: String,
    run_dir: PathBuf,
    templates: TemplateSet,
    /// Only set for synthetic datasets; lets the oracles read the class
    /// from node text.
    class_keywords: Option<Vec<Vec<String>>>,
    dispatches: u64,
    _lock: File,
}

impl Pipeline {
    /// Resolve the dataset, compute the fingerprint and lock the run
    /// directory (`run_dir`, or `run_root/<fingerprint prefix>`).
    pub fn open(config: RunConfig, run_dir: Option<PathBuf>) -> Result<Self, PipelineError> {
        config.validate()?;
        let (graph, _) = Self::load_source(&config)?;
        let fingerprint = config.fingerprint(&graph.digest());
        let run_dir = run_dir.unwrap_or_else(|| config.run_root.join(&fingerprint[..16]));
        fs::create_dir_all(&run_dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(run_dir.join(".lock"))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(PipelineError::Locked(run_dir)),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }
        let mut cfg_json = serde_json::to_vec_pretty(&config.semantic_json(&graph.digest())).expect("json");
        cfg_json.push(b'\n');
        fs::write(run_dir.join("config.json"), cfg_json)?;
        let templates = match &config.templates {
            Some(dir) => TemplateSet::load_dir(dir).map_err(|e| PipelineError::config("templates", &e.to_string()))?,
            None => TemplateSet::default(),
        };
        let class_keywords = match &config.dataset {
            DatasetConfig::Synthetic(spec) => Some(spec.params().keywords),
            DatasetConfig::File { .. } => None,
        };
        Ok(Self {
            config,
            fingerprint,
            run_dir,
            templates,
            class_keywords,
            dispatches: 0,
            _lock: lock,
        })
    }

    fn load_source(config: &RunConfig) -> Result<(TextAttributedGraph, Vec<String>), PipelineError> {
        match &config.dataset {
            DatasetConfig::File { path, format } => {
                let loaded = load_dataset(path, *format)?;
                Ok((loaded.graph, loaded.original_ids))
            }
            DatasetConfig::Synthetic(spec) => {
                let g = generate_synthetic(&spec.params())?;
                let ids = (0..g.num_nodes()).map(|i| i.to_string()).collect();
                Ok((g, ids))
            }
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    /// Backend dispatches (chat and embedding) made by this pipeline so far.
    pub fn dispatch_count(&self) -> u64 {
        self.dispatches
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.run_dir.join(stage.as_str())
    }

    fn enabled(&self, stage: Stage) -> bool {
        !(self.config.ablations.no_finetune && matches!(stage, Stage::Kb | Stage::Corpus))
    }

    fn deps(&self, stage: Stage) -> Vec<Stage> {
        use Stage::*;
        let mut d = match stage {
            Ingest => vec![],
            Split | Sample => vec![Ingest],
            Filter => vec![Ingest, Split, Sample],
            Kb => vec![Ingest, Split, Sample, Filter],
            Corpus => vec![Ingest, Kb],
            Extract => vec![Ingest, Filter, Corpus],
            Embed => vec![Ingest, Extract],
            Train => vec![Ingest, Filter, Embed],
            Eval => vec![Ingest, Filter, Embed, Train],
        };
        d.retain(|&s| self.enabled(s));
        d
    }

    fn closure(&self, stage: Stage) -> Vec<Stage> {
        let mut all = std::collections::BTreeSet::new();
        let mut todo = self.deps(stage);
        while let Some(s) = todo.pop() {
            if all.insert(s) {
                todo.extend(self.deps(s));
            }
        }
        all.into_iter().collect()
    }

    pub fn manifest(&self, stage: Stage) -> Result<Option<Manifest>, PipelineError> {
        let p = self.stage_dir(stage).join(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    fn outputs_intact(&self, m: &Manifest) -> bool {
        let dir = self.stage_dir(m.stage);
        m.outputs
            .iter()
            .all(|(name, digest)| fs::read(dir.join(name)).is_ok_and(|b| &sha_hex(&b) == digest))
    }

    fn inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut inputs = BTreeMap::from([("config".to_owned(), self.fingerprint.clone())]);
        for dep in self.closure(stage) {
            if self.manifest(dep)?.is_none() {
                return Err(PipelineError::MissingUpstream(dep));
            }
        }
        for dep in self.deps(stage) {
            let m = self.manifest(dep)?.ok_or(PipelineError::MissingUpstream(dep))?;
            inputs.insert(dep.as_str().to_owned(), m.output_digest());
        }
        Ok(inputs)
    }

    /// Run one stage unless it is up to date.
    pub fn run_stage(&mut self, stage: Stage) -> Result<StageReport, PipelineError> {
        if !self.enabled(stage) {
            return Ok(StageReport {
                stage,
                status: StageStatus::Disabled,
            });
        }
        let inputs = self.inputs(stage)?;
        if let Some(m) = self.manifest(stage)? {
            if m.inputs == inputs && m.gaps.is_empty() && self.outputs_intact(&m) {
                log::info!("{stage}: up to date");
                return Ok(StageReport {
                    stage,
                    status: StageStatus::UpToDate,
                });
            }
        }
        log::info!("{stage}: running");
        let out = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Split => self.split()?,
            Stage::Sample => self.sample()?,
            Stage::Filter => self.filter()?,
            Stage::Kb => self.kb()?,
            Stage::Corpus => self.corpus()?,
            Stage::Extract => self.extract()?,
            Stage::Embed => self.embed()?,
            Stage::Train => self.train()?,
            Stage::Eval => self.eval()?,
        };
        let dir = self.stage_dir(stage);
        fs::create_dir_all(&dir)?;
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &out.files {
            fs::write(dir.join(name), bytes)?;
            outputs.insert(name.clone(), sha_hex(bytes));
        }
        let gaps = out.gaps.len();
        let manifest = Manifest {
            stage,
            inputs,
            outputs,
            gaps: out.gaps,
            summary: out.summary,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        fs::write(dir.join(MANIFEST), bytes)?;
        Ok(StageReport {
            stage,
            status: if gaps > 0 { StageStatus::Partial { gaps } } else { StageStatus::Ran },
        })
    }

    /// Every stage in order. Partial stages do not stop the run.
    pub fn run_all(&mut self) -> Result<Vec<StageReport>, PipelineError> {
        Stage::ALL.into_iter().map(|s| self.run_stage(s)).collect()
    }

    /// Report written by the eval stage.
    pub fn report(&self) -> Result<ExperimentReport, PipelineError> {
        let p = self.stage_dir(Stage::Eval).join("report.json");
        if !p.exists() {
            return Err(PipelineError::MissingUpstream(Stage::Eval));
        }
        read_json(&p)
    }

    /// Messages written by the extract stage.
    pub fn messages(&self) -> Result<MessageSet, PipelineError> {
        Ok(MessageSet::read_jsonl(&self.stage_dir(Stage::Extract).join("messages.jsonl"))?)
    }

    // ---- artifact readers ----

    pub fn graph(&self) -> Result<TextAttributedGraph, PipelineError> {
        Ok(load_dataset(&self.stage_dir(Stage::Ingest).join(GRAPH_FILE), DatasetFormat::Jsonl)?.graph)
    }

    fn llm_split(&self) -> Result<SplitAssignment, PipelineError> {
        read_json(&self.stage_dir(Stage::Split).join("split.json"))
    }

    /// Neighborhoods after the edge filter (identical to the sampled ones
    /// when the filter is off).
    pub fn neighborhoods(&self) -> Result<SampledNeighborhoods, PipelineError> {
        read_json(&self.stage_dir(Stage::Filter).join(NEIGHBORHOODS))
    }

    fn sampled(&self) -> Result<SampledNeighborhoods, PipelineError> {
        read_json(&self.stage_dir(Stage::Sample).join(NEIGHBORHOODS))
    }

    fn gateway(&mut self, config: &BackendConfig, graph: &TextAttributedGraph) -> Result<Gateway, PipelineError> {
        let ctx = OracleContext {
            labels: graph.labels().map(<[usize]>::to_vec),
            class_names: (0..graph.num_classes()).map(|c| graph.class_name(c)).collect(),
            class_keywords: self.class_keywords.clone(),
        };
        Ok(Gateway::new(config.clone(), ctx)?)
    }

    fn provenance(&self, graph: &TextAttributedGraph) -> Provenance {
        Provenance {
            dataset_hash: graph.digest(),
            seeds: BTreeMap::from([("base_seed".to_owned(), self.config.base_seed)]),
            template_hashes: self.templates.hashes(),
        }
    }

    /// Partial unless every request failed for exhaustion, which is fatal.
    fn check_gaps(&self, gaps: &[PairFailure], answered: usize) -> Result<(), PipelineError> {
        if answered == 0 && !gaps.is_empty() && gaps.iter().all(|g| g.exhausted) {
            return Err(PipelineError::BackendExhausted(gaps[0].error.clone()));
        }
        Ok(())
    }

    // ---- stages ----

    fn ingest(&mut self) -> Result<Output, PipelineError> {
        let (graph, ids) = Self::load_source(&self.config)?;
        let tmp = tempfile::tempdir()?;
        save_jsonl(&graph, &tmp.path().join(GRAPH_FILE))?;
        write_id_map(&ids, &tmp.path().join("id_map.tsv"))?;
        let summary = serde_json::json!({
            "nodes": graph.num_nodes(),
            "edges": graph.edges().len(),
            "classes": graph.num_classes(),
            "dataset_digest": graph.digest(),
        });
        Ok(Output::new(summary)
            .file(GRAPH_FILE, fs::read(tmp.path().join(GRAPH_FILE))?)
            .file("id_map.tsv", fs::read(tmp.path().join("id_map.tsv"))?))
    }

    fn split(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let split = make_random_split(&graph, self.config.split, self.config.base_seed)?;
        let summary = serde_json::json!({
            "train": split.train.len(), "val": split.val.len(), "test": split.test.len(),
        });
        Ok(Output::new(summary).json("split.json", &split))
    }

    fn sample(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let n = sample_edges(&graph, self.config.k, self.config.base_seed, self.config.sampling_mode);
        let summary = serde_json::json!({ "pairs": n.num_pairs() });
        Ok(Output::new(summary).json(NEIGHBORHOODS, &n))
    }

    fn filter(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let sampled = self.sampled()?;
        let mut out = Output::new(serde_json::Value::Null);
        if self.config.n_ep_pairs > 0 {
            let split = self.llm_split()?;
            let corpus = build_ep_corpus(
                &graph,
                &split,
                &self.templates,
                self.config.n_ep_pairs,
                self.config.text_budget,
                self.config.base_seed,
            )?;
            let mut buf = b"# ".to_vec();
            serde_json::to_writer(&mut buf, &self.provenance(&graph)).expect("provenance serializes");
            buf.push(b'\n');
            buf.extend(jsonl(&corpus.records));
            out = out.file("ep_corpus.jsonl", buf);
        }
        let (filtered, summary) = if self.config.oef {
            let cfg = self.config.ep_backend.clone();
            let gw = self.gateway(&cfg, &graph)?;
            let result = apply_edge_filter(
                &sampled,
                &graph,
                &gw,
                &self.templates,
                self.config.filter_mode,
                self.config.text_budget,
            );
            self.dispatches += gw.dispatch_count();
            let result = result?;
            out = out.file("decisions.jsonl", jsonl(&result.decisions));
            let summary = serde_json::json!({
                "submitted": result.decisions.len(),
                "kept": result.kept_pairs.len(),
                "anomalies": result.anomalies.len(),
            });
            (result.to_neighborhoods(&sampled), summary)
        } else {
            let summary = serde_json::json!({ "submitted": 0, "kept": sampled.num_pairs(), "anomalies": 0 });
            (sampled, summary)
        };
        out.summary = summary;
        Ok(out.json(NEIGHBORHOODS, &filtered))
    }

    fn kb_neighborhoods(&self) -> Result<SampledNeighborhoods, PipelineError> {
        match self.config.oef_scope {
            FilterScope::Both => self.neighborhoods(),
            FilterScope::ExtractionOnly => self.sampled(),
        }
    }

    fn kb(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let split = self.llm_split()?;
        let hoods = self.kb_neighborhoods()?;
        let fallback = self.config.self_loop_mode != SelfLoopMode::Off;
        // Without self-loop fallback a node with no neighbors has nothing
        // to explain from.
        let candidates: Vec<usize> = split
            .train
            .iter()
            .copied()
            .filter(|&i| fallback || !hoods.lists[i].is_empty())
            .collect();
        let nodes = sample_kb_nodes(&candidates, self.config.kb_nodes, self.config.base_seed)?;
        let cfg = self.config.kb_backend.clone();
        let gw = self.gateway(&cfg, &graph)?;
        let outcome = generate_kb_records(&graph, &nodes, &hoods, &gw, &self.templates, fallback, self.config.text_budget);
        self.dispatches += gw.dispatch_count();
        let outcome = outcome?;
        self.check_gaps(&outcome.failures, outcome.records.len())?;
        let summary = serde_json::json!({ "nodes": nodes, "records": outcome.records.len() });
        let mut out = Output::new(summary).file("kb_records.jsonl", jsonl(&outcome.records));
        out.gaps = outcome.failures;
        Ok(out)
    }

    fn corpus(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let text = fs::read_to_string(self.stage_dir(Stage::Kb).join("kb_records.jsonl"))?;
        let records: Vec<KbRecord> = text
            .lines()
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::Corrupt {
                path: self.stage_dir(Stage::Kb).join("kb_records.jsonl"),
                reason: e.to_string(),
            })?;
        let corpus =
            emit_finetune_corpus(&records, &graph, &self.templates, self.config.text_budget, self.provenance(&graph))?;
        let tmp = tempfile::NamedTempFile::new()?;
        corpus.write(tmp.path())?;
        let summary = serde_json::json!({ "records": corpus.records.len() });
        Ok(Output::new(summary).file("finetune_corpus.jsonl", fs::read(tmp.path())?))
    }

    fn extract(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let hoods = self.neighborhoods()?;
        let cfg = self.config.extract_backend.clone();
        let gw = self.gateway(&cfg, &graph)?;
        let budget = self.config.text_budget;
        let result = extract_messages(&graph, hoods.pairs(), &gw, &self.templates, budget).and_then(|mut out| {
            let targets = self_loop_targets(self.config.self_loop_mode, &hoods);
            let selves = self_loop_enhance(&graph, &targets, &gw, &self.templates, budget)?;
            out.messages.extend(selves.messages);
            out.gaps.extend(selves.gaps);
            Ok(out)
        });
        self.dispatches += gw.dispatch_count();
        let outcome = result?;
        self.check_gaps(&outcome.gaps, outcome.messages.len())?;
        let tmp = tempfile::NamedTempFile::new()?;
        outcome.messages.write_jsonl(tmp.path())?;
        let self_messages = outcome.messages.iter().filter(|((i, j), _)| i == j).count();
        let summary = serde_json::json!({
            "messages": outcome.messages.len(),
            "self_messages": self_messages,
            "gaps": outcome.gaps.len(),
        });
        let mut out = Output::new(summary).file("messages.jsonl", fs::read(tmp.path())?);
        out.gaps = outcome.gaps;
        Ok(out)
    }

    fn embed(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let messages = self.messages()?;
        let docs = aggregate_all(graph.texts(), &messages, !self.config.ablations.no_origin_text);
        let empty_rows = docs.iter().filter(|d| d.is_none()).count();
        let matrix = match self.config.embedder.kind {
            EmbedderKind::Hashing => hashing_matrix(&docs, self.config.embedder.dim)?,
            EmbedderKind::Service => {
                let cfg = self.config.embedder.backend.clone().expect("validated");
                let svc = EmbedService::new(cfg)?;
                let m = svc.embed(&docs);
                self.dispatches += svc.dispatch_count();
                m?
            }
        };
        let tmp = tempfile::tempdir()?;
        let path = tmp.path().join(EMBEDDINGS);
        matrix.save(&path, &graph.digest())?;
        let summary = serde_json::json!({
            "rows": matrix.rows(),
            "dim": matrix.dim(),
            "embedder_id": matrix.embedder_id(),
            "zero_rows": empty_rows,
        });
        Ok(Output::new(summary)
            .file(EMBEDDINGS, fs::read(&path)?)
            .file("embeddings.bin.json", fs::read(crate::embed::sidecar_path(&path))?))
    }

    fn features(&self) -> Result<DenseMatrix, PipelineError> {
        let (m, _) = EmbeddingMatrix::load(&self.stage_dir(Stage::Embed).join(EMBEDDINGS))?;
        Ok(DenseMatrix::from_f32(m.rows(), m.dim(), m.as_slice())?)
    }

    fn model_kind(&self) -> ModelKind {
        if self.config.ablations.no_es {
            ModelKind::Mlp
        } else {
            self.config.train.model
        }
    }

    /// Normalized adjacency over the symmetrized filtered pairs.
    fn adjacency(&self, n: usize) -> Result<Option<CsrMatrix>, PipelineError> {
        if self.model_kind() == ModelKind::Mlp {
            return Ok(None);
        }
        let pairs: Vec<(usize, usize)> = self.neighborhoods()?.pairs().collect();
        Ok(Some(normalize_adjacency(&pairs, n)?))
    }

    fn train(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let labels = graph.require_labels()?.to_vec();
        let x = self.features()?;
        let adj = self.adjacency(x.rows())?;
        let mut out = Output::new(serde_json::json!({ "runs": self.config.runs }));
        for r in 0..self.config.runs {
            let seed = self.config.base_seed.wrapping_add(r as u64);
            let split = split_nodes(x.rows(), self.config.split, seed)?;
            let cfg = TrainConfig {
                seed,
                model: self.model_kind(),
                ..self.config.train.clone()
            };
            let outcome = train(&x, adj.as_ref(), &labels, graph.num_classes(), &split, &cfg)?;
            let artifact = RunArtifact {
                run: r,
                seed,
                split,
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.epochs_run,
                best_val_accuracy: outcome.best_val_accuracy,
                params: outcome.params,
            };
            out = out.json(&format!("run_{r:03}.json"), &artifact);
        }
        Ok(out)
    }

    fn variant_label(&self) -> String {
        let model = match self.model_kind() {
            ModelKind::Gcn => "GCN",
            ModelKind::Mlp => "MLP",
        };
        let c = &self.config;
        let mut label = format!("{model} k={} oef={}", c.k, if c.oef { "on" } else { "off" });
        if c.self_loop_mode != SelfLoopMode::Off {
            label.push_str(&format!(" self_loop={}", serde_json::to_value(c.self_loop_mode).unwrap().as_str().unwrap()));
        }
        for (on, name) in [
            (c.ablations.no_finetune, "w/o finetune"),
            (c.ablations.no_origin_text, "w/o origin text"),
        ] {
            if on {
                label.push_str(&format!(" {name}"));
            }
        }
        label
    }

    fn eval(&mut self) -> Result<Output, PipelineError> {
        let graph = self.graph()?;
        let labels = graph.require_labels()?.to_vec();
        let x = self.features()?;
        let adj = self.adjacency(x.rows())?;
        let mut accs = Vec::with_capacity(self.config.runs);
        for r in 0..self.config.runs {
            let run: RunArtifact = read_json(&self.stage_dir(Stage::Train).join(format!("run_{r:03}.json")))?;
            accs.push(evaluate(&run.params, &x, adj.as_ref(), self.model_kind(), &labels, &run.split)?);
        }
        let report = ExperimentReport::from_accuracies(accs, self.fingerprint.clone())?;
        let table = render_table("Variant", &[(self.variant_label(), &report)]);
        let summary = serde_json::json!({ "mean": report.mean, "std": report.std });
        Ok(Output::new(summary)
            .json("report.json", &report)
            .file("report.txt", table.into_bytes()))
    }
}
