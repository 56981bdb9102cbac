use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::edge_filter::FilterMode;
use crate::dual::{SelfLoopMode, DEFAULT_TEXT_BUDGET};
use crate::embed::DEFAULT_HASH_DIM;
use crate::gateway::{BackendConfig, BackendKind};
use crate::gnn::TrainConfig;
use crate::graph::{DatasetFormat, EdgeCap, SamplingMode, SplitRatios, SyntheticParams};

/// Where the graph comes from: a file on disk or the planted-partition
/// generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    File { path: PathBuf, format: DatasetFormat },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub keywords_per_class: usize,
    pub filler_vocab: usize,
    pub words_per_node: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            nodes_per_class: 100,
            p_in: 0.05,
            p_out: 0.01,
            keywords_per_class: 10,
            filler_vocab: 50,
            words_per_node: 20,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn params(&self) -> SyntheticParams {
        SyntheticParams::with_generated_vocab(
            self.num_classes,
            self.nodes_per_class,
            self.p_in,
            self.p_out,
            self.keywords_per_class,
            self.filler_vocab,
            self.words_per_node,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterScope {
    /// Filtered neighborhoods feed both the knowledge-base and extraction
    /// stages.
    #[default]
    Both,
    /// Only extraction sees filtered neighborhoods.
    ExtractionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    /// Output dimension of the hashing embedder.
    pub dim: usize,
    /// Endpoint for the service embedder.
    pub backend: Option<BackendConfig>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            dim: DEFAULT_HASH_DIM,
            backend: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Skip the knowledge-base and corpus stages.
    pub no_finetune: bool,
    /// Classify with the MLP instead of the GCN.
    pub no_es: bool,
    /// Embed messages only, without the node's own text.
    pub no_origin_text: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub run_root: PathBuf,
    pub k: EdgeCap,
    pub sampling_mode: SamplingMode,
    pub oef: bool,
    pub oef_scope: FilterScope,
    pub filter_mode: FilterMode,
    pub self_loop_mode: SelfLoopMode,
    /// Number of training nodes the knowledge-base LLM explains.
    pub kb_nodes: usize,
    /// Pairs in the edge-predictor corpus; 0 skips writing it.
    pub n_ep_pairs: usize,
    pub text_budget: usize,
    pub split: SplitRatios,
    pub runs: usize,
    pub base_seed: u64,
    pub ablations: Ablations,
    /// Template directory overriding the built-in prompts.
    pub templates: Option<PathBuf>,
    pub kb_backend: BackendConfig,
    pub extract_backend: BackendConfig,
    pub ep_backend: BackendConfig,
    pub embedder: EmbedderConfig,
    pub train: TrainConfig,
}

const DEFAULT_CACHE: &str = ".lansagnn-cache";

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::Synthetic(SyntheticSpec::default()),
            run_root: PathBuf::from("runs"),
            k: EdgeCap::Limited(10),
            sampling_mode: SamplingMode::Directional,
            oef: false,
            oef_scope: FilterScope::Both,
            filter_mode: FilterMode::Directed,
            self_loop_mode: SelfLoopMode::Off,
            kb_nodes: 20,
            n_ep_pairs: 200,
            text_budget: DEFAULT_TEXT_BUDGET,
            split: SplitRatios::default(),
            runs: 10,
            base_seed: 0,
            ablations: Ablations::default(),
            templates: None,
            kb_backend: BackendConfig::new(BackendKind::OracleExtract, DEFAULT_CACHE),
            extract_backend: BackendConfig::new(BackendKind::OracleExtract, DEFAULT_CACHE),
            ep_backend: BackendConfig::new(BackendKind::OracleEp, DEFAULT_CACHE),
            embedder: EmbedderConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Parse `value` as a TOML value, or take it as a bare string when that fails
/// (so `--dataset.path=data/cora.jsonl` needs no quoting).
fn parse_override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), PipelineError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| PipelineError::config(key, "empty key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| PipelineError::config(key, &format!("{p} is not a table")))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}

/// Pre-fill backend tables that are present but lack a `kind`, so a partial
/// override such as `--extract_backend.fixed_text=X` keeps the default kind.
fn fill_backend_kinds(table: &mut toml::Table, defaults: &RunConfig) {
    for (name, cfg) in [
        ("kb_backend", &defaults.kb_backend),
        ("extract_backend", &defaults.extract_backend),
        ("ep_backend", &defaults.ep_backend),
    ] {
        if let Some(toml::Value::Table(t)) = table.get_mut(name) {
            t.entry("kind")
                .or_insert_with(|| toml::Value::String(cfg.kind.as_str().to_owned()));
        }
    }
}

impl RunConfig {
    /// Load `path` (if any), apply `key=value` overrides, resolve relative
    /// paths against the config file's directory and validate.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, PipelineError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| PipelineError::config("config", &format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| PipelineError::config("config", &e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_path(&mut table, k, parse_override_value(v))?;
        }
        let defaults = Self::default();
        fill_backend_kinds(&mut table, &defaults);
        let mut cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::config("config", e.message()))?;
        if let Some(base) = path.and_then(Path::parent) {
            cfg.resolve_relative(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetConfig::File { path, .. } = &mut self.dataset {
            fix(path);
        }
        fix(&mut self.run_root);
        if let Some(t) = &mut self.templates {
            fix(t);
        }
        for b in [&mut self.kb_backend, &mut self.extract_backend, &mut self.ep_backend] {
            fix(&mut b.cache_dir);
        }
        if let Some(b) = &mut self.embedder.backend {
            fix(&mut b.cache_dir);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let DatasetConfig::File { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(PipelineError::config("dataset.path", &format!("{} does not exist", path.display())));
            }
        }
        if let Some(t) = &self.templates {
            if !t.is_dir() {
                return Err(PipelineError::config("templates", &format!("{} is not a directory", t.display())));
            }
        }
        if self.k == EdgeCap::Limited(0) {
            return Err(PipelineError::config("k", "must be >= 1 or inf"));
        }
        if self.runs == 0 {
            return Err(PipelineError::config("runs", "must be >= 1"));
        }
        if self.text_budget == 0 {
            return Err(PipelineError::config("text_budget", "must be >= 1"));
        }
        if !self.ablations.no_finetune && self.kb_nodes == 0 {
            return Err(PipelineError::config("kb_nodes", "must be >= 1 unless ablations.no_finetune is set"));
        }
        for (name, b) in [
            ("kb_backend", &self.kb_backend),
            ("extract_backend", &self.extract_backend),
            ("ep_backend", &self.ep_backend),
        ] {
            b.validate().map_err(|e| PipelineError::config(name, &e.to_string()))?;
        }
        match (self.embedder.kind, &self.embedder.backend) {
            (EmbedderKind::Hashing, _) if self.embedder.dim < 2 => {
                return Err(PipelineError::config("embedder.dim", "must be >= 2"))
            }
            (EmbedderKind::Service, None) => {
                return Err(PipelineError::config("embedder.backend", "service embedder needs a backend"))
            }
            (EmbedderKind::Service, Some(b)) => {
                b.validate().map_err(|e| PipelineError::config("embedder.backend", &e.to_string()))?
            }
            _ => {}
        }
        self.train.validate().map_err(|e| PipelineError::config("train", &e.to_string()))?;
        Ok(())
    }

    /// Canonical JSON of the fields that affect results. Cache locations,
    /// concurrency, retry and timeout settings, the run root and the dataset
    /// path are left out; the dataset enters through `dataset_digest`.
    pub fn semantic_json(&self, dataset_digest: &str) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("run_root");
        if let Some(d) = obj.get_mut("dataset").and_then(|d| d.as_object_mut()) {
            d.remove("path");
        }
        obj.insert("dataset_digest".into(), dataset_digest.into());
        let strip = |b: &mut serde_json::Value| {
            if let Some(b) = b.as_object_mut() {
                for k in ["cache_dir", "max_inflight", "max_retries", "retry_base_ms", "timeout_secs", "api_key_env_var"] {
                    b.remove(k);
                }
            }
        };
        for k in ["kb_backend", "extract_backend", "ep_backend"] {
            if let Some(b) = obj.get_mut(k) {
                strip(b);
            }
        }
        if let Some(b) = obj.get_mut("embedder").and_then(|e| e.get_mut("backend")) {
            strip(b);
        }
        // Template files count by content, not by location.
        if let Some(dir) = self.templates.as_ref() {
            let mut h = Sha256::new();
            for name in ["I_EP.txt", "I_KB.txt", "I_E.txt", "I_SELF.txt"] {
                h.update(name.as_bytes());
                h.update(std::fs::read(dir.join(name)).unwrap_or_default());
            }
            obj.insert("templates".into(), hex::encode(h.finalize()).into());
        }
        v
    }

    /// Hex digest of [`Self::semantic_json`].
    pub fn fingerprint(&self, dataset_digest: &str) -> String {
        let json = serde_json::to_vec(&self.semantic_json(dataset_digest)).expect("json serializes");
        hex::encode(Sha256::digest(json))
    }
}
