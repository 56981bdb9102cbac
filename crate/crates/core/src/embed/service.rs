use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use parking_lot::Mutex;
use sha2::{Digest, Sha256};

use super::{AggregatedDocument, EmbedError, EmbeddingMatrix};
use crate::gateway::{BackendConfig, BackendError, BackendKind, GatewayError, HttpClient, ResponseCache};

/// Texts per request.
const BATCH: usize = 32;

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

impl EmbedBackend for HttpClient {
    fn embed(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        self.embeddings(model, inputs)
    }
}

/// Embeddings from an OpenAI-compatible endpoint, cached per document text.
pub struct EmbedService {
    config: BackendConfig,
    backend: Option<Box<dyn EmbedBackend>>,
    cache: ResponseCache,
    dispatches: AtomicU64,
}

impl std::fmt::Debug for EmbedService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbedService")
            .field("model", &self.config.model)
            .field("cache", &self.cache.dir())
            .finish()
    }
}

impl EmbedService {
    /// `http_openai_compatible` dispatches, `replay` serves the cache only.
    pub fn new(config: BackendConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        let backend: Option<Box<dyn EmbedBackend>> = match config.kind {
            BackendKind::HttpOpenaiCompatible => Some(Box::new(HttpClient::new(
                config.base_url.as_deref().unwrap_or_default(),
                &config.api_key_env_var,
                Duration::from_secs(config.timeout_secs),
            )?)),
            BackendKind::Replay => None,
            other => {
                return Err(GatewayError::InvalidConfig(format!(
                    "{} cannot serve embeddings",
                    other.as_str()
                ))
                .into())
            }
        };
        Self::assemble(config, backend)
    }

    pub fn with_backend(config: BackendConfig, backend: Box<dyn EmbedBackend>) -> Result<Self, EmbedError> {
        config.validate()?;
        Self::assemble(config, Some(backend))
    }

    fn assemble(config: BackendConfig, backend: Option<Box<dyn EmbedBackend>>) -> Result<Self, EmbedError> {
        Ok(Self {
            cache: ResponseCache::open(&config.cache_dir)?,
            config,
            backend,
            dispatches: AtomicU64::new(0),
        })
    }

    pub fn embedder_id(&self) -> String {
        format!("service:{}", self.config.model)
    }

    /// Backend calls made so far, retries included.
    pub fn dispatch_count(&self) -> u64 {
        self.dispatches.load(Ordering::SeqCst)
    }

    fn key(&self, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(
            serde_json::to_vec(&serde_json::json!({
                "backend": self.config.key_kind().as_str(),
                "endpoint": "embeddings",
                "model": self.config.model,
                "text": text,
            }))
            .expect("key serializes"),
        );
        hex::encode(h.finalize())
    }

    /// One row per document in input order. `None` rows are zero vectors.
    pub fn embed(&self, docs: &[Option<AggregatedDocument>]) -> Result<EmbeddingMatrix, EmbedError> {
        let mut unique: BTreeMap<String, &str> = BTreeMap::new();
        for doc in docs.iter().flatten() {
            unique.entry(self.key(&doc.text)).or_insert(&doc.text);
        }
        let mut vectors: BTreeMap<String, Vec<f32>> = BTreeMap::new();
        let mut missing: Vec<(String, String)> = Vec::new();
        for (key, text) in &unique {
            match self.cache.get(key)? {
                Some(raw) => {
                    let v = serde_json::from_str(&raw).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
                    vectors.insert(key.clone(), v);
                }
                None => missing.push((key.clone(), (*text).to_owned())),
            }
        }
        if !missing.is_empty() {
            let backend = self
                .backend
                .as_ref()
                .ok_or_else(|| GatewayError::CacheMiss(missing[0].0.clone()))?;
            vectors.extend(self.fetch(backend.as_ref(), &missing)?);
        }

        let mut d = None;
        for v in vectors.values() {
            match d {
                None => d = Some(v.len()),
                Some(expected) if expected != v.len() => {
                    return Err(EmbedError::DimensionMismatch { expected, got: v.len() })
                }
                _ => {}
            }
        }
        let d = d.ok_or(EmbedError::InvalidDimension(0))?;
        let rows = docs
            .iter()
            .map(|doc| match doc {
                Some(doc) => vectors[&self.key(&doc.text)].clone(),
                None => vec![0.0; d],
            })
            .collect();
        EmbeddingMatrix::from_rows(rows, d, self.embedder_id())
    }

    fn fetch(
        &self,
        backend: &dyn EmbedBackend,
        missing: &[(String, String)],
    ) -> Result<BTreeMap<String, Vec<f32>>, EmbedError> {
        let batches: Vec<&[(String, String)]> = missing.chunks(BATCH).collect();
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Result<(), EmbedError>>> = Mutex::new(Vec::new());
        let fetched: Mutex<BTreeMap<String, Vec<f32>>> = Mutex::new(BTreeMap::new());
        let policy = self.config.retry_policy();
        let workers = self.config.max_inflight.min(batches.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(b) else { break };
                    let inputs: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
                    let outcome = policy
                        .run(|| {
                            self.dispatches.fetch_add(1, Ordering::SeqCst);
                            backend.embed(&self.config.model, &inputs)
                        })
                        .map_err(EmbedError::from)
                        .and_then(|vs| {
                            for ((key, _), v) in batch.iter().zip(vs) {
                                if v.iter().any(|x| !x.is_finite()) {
                                    return Err(GatewayError::MalformedResponse("non-finite embedding".into()).into());
                                }
                                let meta = serde_json::json!({"endpoint": "embeddings", "model": self.config.model});
                                self.cache.put(key, &serde_json::to_string(&v).expect("floats serialize"), &meta)?;
                                fetched.lock().insert(key.clone(), v);
                            }
                            Ok(())
                        });
                    results.lock().push(outcome);
                });
            }
        });
        results.into_inner().into_iter().collect::<Result<Vec<()>, _>>()?;
        Ok(fetched.into_inner())
    }
}
