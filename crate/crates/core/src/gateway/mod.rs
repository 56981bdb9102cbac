//! Chat-completion gateway.
//!
//! Every LLM call in the pipeline goes through [`Gateway::complete`], which
//! looks the request up in a content-addressed cache, and on a miss
//! dispatches it to the configured backend under a bounded number of
//! in-flight requests with exponential-backoff retry, then writes the answer
//! through to the cache. Once a response is cached, identical requests return
//! byte-identical text.

mod cache;
mod http;
mod oracle;
mod retry;
mod template;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKeyParts, ResponseCache};
pub use http::HttpClient;
pub use oracle::{extract_message, oracle_answer, OracleContext, OracleHint, OracleKind};
pub use retry::{BackendError, Permit, RetryPolicy, Semaphore};
pub use template::{
    placeholders, render_prompt, PromptTemplate, RenderedPrompt, TemplateError, TemplateId, TemplateSet, PAIR_LAYOUT,
    SINGLE_LAYOUT,
};

pub const DEFAULT_API_KEY_ENV: &str = "LANSAGNN_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unreachable after {attempts} attempts: {last}")]
    NetworkExhausted { attempts: u32, last: String },
    #[error("replay cache has no entry {0}")]
    CacheMiss(String),
    #[error("environment variable {0} holding the API key is not set")]
    AuthMissing(String),
    #[error("backend rejected request with HTTP {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("oracle needs hidden labels: {0}")]
    OracleNeedsLabels(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("cache io: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    /// True for failures caused by an unreachable or exhausted backend.
    pub fn is_exhausted(&self) -> bool {
        matches!(self, Self::NetworkExhausted { .. } | Self::Rejected { .. } | Self::AuthMissing(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpOpenaiCompatible,
    OracleEp,
    OracleExtract,
    FixedText,
    Replay,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::HttpOpenaiCompatible => "http_openai_compatible",
            Self::OracleEp => "oracle_ep",
            Self::OracleExtract => "oracle_extract",
            Self::FixedText => "fixed_text",
            Self::Replay => "replay",
        }
    }
}

fn default_model() -> String {
    "default".into()
}
fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}
fn default_inflight() -> usize {
    4
}
fn default_retries() -> u32 {
    4
}
fn default_retry_base_ms() -> u64 {
    1000
}
fn default_timeout() -> u64 {
    120
}
fn default_max_tokens() -> u32 {
    256
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from(".lansagnn-cache")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_key_env")]
    pub api_key_env_var: String,
    /// Answer returned by the `fixed_text` backend.
    #[serde(default)]
    pub fixed_text: Option<String>,
    /// Backend whose cache entries a `replay` backend serves.
    #[serde(default)]
    pub replay_of: Option<BackendKind>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    /// Retries after the first attempt.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
}

impl BackendConfig {
    pub fn new(kind: BackendKind, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            model: default_model(),
            base_url: None,
            api_key_env_var: default_key_env(),
            fixed_text: None,
            replay_of: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_inflight: default_inflight(),
            max_retries: default_retries(),
            retry_base_ms: default_retry_base_ms(),
            timeout_secs: default_timeout(),
            cache_dir: cache_dir.into(),
        }
    }

    pub fn fixed(text: &str, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            fixed_text: Some(text.to_owned()),
            ..Self::new(BackendKind::FixedText, cache_dir)
        }
    }

    pub fn http(base_url: &str, model: &str, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_url: Some(base_url.to_owned()),
            model: model.to_owned(),
            ..Self::new(BackendKind::HttpOpenaiCompatible, cache_dir)
        }
    }

    /// Backend name that goes into cache keys.
    pub fn key_kind(&self) -> BackendKind {
        match self.kind {
            BackendKind::Replay => self.replay_of.unwrap_or(BackendKind::HttpOpenaiCompatible),
            k => k,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidConfig(m.to_owned()));
        if self.max_inflight == 0 {
            return bad("max_inflight must be >= 1");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be >= 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a non-negative number");
        }
        match self.kind {
            BackendKind::HttpOpenaiCompatible if self.base_url.is_none() => bad("http backend needs base_url"),
            BackendKind::FixedText if self.fixed_text.is_none() => bad("fixed_text backend needs fixed_text"),
            BackendKind::Replay if self.replay_of == Some(BackendKind::Replay) => bad("replay_of cannot be replay"),
            _ => Ok(()),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.retry_base_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub template_hash: String,
    /// Node ids and bindings, consulted only by oracle backends.
    pub hint: Option<OracleHint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub from_cache: bool,
}

/// Something that can answer one chat request.
pub trait Backend: Send + Sync {
    fn call(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

struct FixedBackend(String);

impl Backend for FixedBackend {
    fn call(&self, _: &ChatRequest) -> Result<String, BackendError> {
        Ok(self.0.clone())
    }
}

struct OracleBackend {
    kind: OracleKind,
    context: OracleContext,
}

impl Backend for OracleBackend {
    fn call(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let hint = request
            .hint
            .as_ref()
            .ok_or_else(|| BackendError::Fatal(GatewayError::InvalidRequest("oracle request without hint".into())))?;
        oracle_answer(self.kind, hint, &self.context).map_err(BackendError::Fatal)
    }
}

pub struct Gateway {
    config: BackendConfig,
    backend: Option<Box<dyn Backend>>,
    cache: ResponseCache,
    inflight: Semaphore,
    dispatches: AtomicU64,
    cache_hits: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("kind", &self.config.kind)
            .field("model", &self.config.model)
            .field("cache", &self.cache.dir())
            .finish()
    }
}

impl Gateway {
    /// Build the backend named by `config.kind`. Oracle backends answer from
    /// `oracle`; other kinds ignore it.
    pub fn new(config: BackendConfig, oracle: OracleContext) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Option<Box<dyn Backend>> = match config.kind {
            BackendKind::HttpOpenaiCompatible => Some(Box::new(HttpClient::new(
                config.base_url.as_deref().unwrap_or_default(),
                &config.api_key_env_var,
                Duration::from_secs(config.timeout_secs),
            )?)),
            BackendKind::OracleEp => Some(Box::new(OracleBackend {
                kind: OracleKind::Ep,
                context: oracle,
            })),
            BackendKind::OracleExtract => Some(Box::new(OracleBackend {
                kind: OracleKind::Extract,
                context: oracle,
            })),
            BackendKind::FixedText => Some(Box::new(FixedBackend(config.fixed_text.clone().unwrap_or_default()))),
            BackendKind::Replay => None,
        };
        Self::assemble(config, backend)
    }

    /// Use a caller-supplied backend; cache keys still use `config.kind`.
    pub fn with_backend(config: BackendConfig, backend: Box<dyn Backend>) -> Result<Self, GatewayError> {
        Self::assemble(config, Some(backend))
    }

    fn assemble(config: BackendConfig, backend: Option<Box<dyn Backend>>) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self {
            cache: ResponseCache::open(&config.cache_dir)?,
            inflight: Semaphore::new(config.max_inflight),
            dispatches: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            config,
            backend,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Number of backend calls made so far (each retry counts).
    pub fn dispatch_count(&self) -> u64 {
        self.dispatches.load(Ordering::SeqCst)
    }

    pub fn cache_hit_count(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    /// Wrap a rendered prompt into a request using this backend's defaults.
    pub fn request(&self, prompt: &RenderedPrompt, node_a: usize, node_b: Option<usize>) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            prompt: prompt.text(),
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
            template_hash: prompt.template_hash.clone(),
            hint: Some(OracleHint {
                node_a,
                node_b,
                bindings: prompt.bindings.clone(),
            }),
        }
    }

    pub fn cache_key(&self, request: &ChatRequest) -> String {
        CacheKeyParts {
            backend: self.config.key_kind().as_str(),
            model: &request.model,
            template_hash: &request.template_hash,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        }
        .digest()
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(request.temperature >= 0.0) || request.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0 and max_tokens >= 1".into()));
        }
        let key = self.cache_key(request);
        if let Some(text) = self.cache.get(&key)? {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(ChatResponse { text, from_cache: true });
        }
        let backend = self.backend.as_ref().ok_or_else(|| GatewayError::CacheMiss(key.clone()))?;
        let text = {
            let _permit = self.inflight.acquire();
            self.config.retry_policy().run(|| {
                self.dispatches.fetch_add(1, Ordering::SeqCst);
                backend.call(request)
            })?
        };
        let meta = serde_json::json!({
            "backend": self.config.key_kind().as_str(),
            "model": request.model,
            "template_hash": request.template_hash,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "prompt_chars": request.prompt.chars().count(),
        });
        self.cache.put(&key, &text, &meta)?;
        Ok(ChatResponse { text, from_cache: false })
    }

    /// Complete a batch with up to `max_inflight` workers. Results come back
    /// in input order; identical requests are dispatched once.
    pub fn complete_many(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, GatewayError>> {
        let keys: Vec<String> = requests.iter().map(|r| self.cache_key(r)).collect();
        let mut first_of: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
        let mut unique = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            first_of.entry(k.as_str()).or_insert_with(|| {
                unique.push(i);
                i
            });
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<parking_lot::Mutex<Option<Result<ChatResponse, GatewayError>>>> =
            (0..requests.len()).map(|_| parking_lot::Mutex::new(None)).collect();
        let workers = self.config.max_inflight.min(unique.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let u = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&idx) = unique.get(u) else { break };
                    *slots[idx].lock() = Some(self.complete(&requests[idx]));
                });
            }
        });
        let mut out: Vec<Option<Result<ChatResponse, GatewayError>>> =
            slots.into_iter().map(|m| m.into_inner()).collect();
        for (i, k) in keys.iter().enumerate() {
            let first = first_of[k.as_str()];
            if first != i {
                out[i] = Some(match out[first].as_ref().expect("first occurrence completed") {
                    Ok(r) => Ok(ChatResponse {
                        text: r.text.clone(),
                        from_cache: true,
                    }),
                    Err(e) => Err(GatewayError::InvalidRequest(format!("duplicate of failed request: {e}"))),
                });
            }
        }
        out.into_iter().map(|r| r.expect("every slot filled")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn req(prompt: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            prompt: prompt.into(),
            max_tokens: 8,
            temperature: 0.0,
            template_hash: "t".into(),
            hint: None,
        }
    }

    #[test]
    fn fixed_text_is_cached_after_first_call() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(BackendConfig::fixed("OK", dir.path()), OracleContext::default()).unwrap();
        let first = gw.complete(&req("p")).unwrap();
        assert_eq!(first, ChatResponse { text: "OK".into(), from_cache: false });
        let second = gw.complete(&req("p")).unwrap();
        assert_eq!(second, ChatResponse { text: "OK".into(), from_cache: true });
        assert_eq!(gw.dispatch_count(), 1);
        assert_eq!(gw.complete(&req("other")).unwrap().text, "OK");
    }

    #[test]
    fn replay_on_empty_cache_misses() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(BackendConfig::new(BackendKind::Replay, dir.path()), OracleContext::default()).unwrap();
        assert!(matches!(gw.complete(&req("p")), Err(GatewayError::CacheMiss(_))));
        assert_eq!(gw.dispatch_count(), 0);
    }

    #[test]
    fn replay_serves_entries_of_the_replayed_kind() {
        let dir = tempfile::tempdir().unwrap();
        let fixed = Gateway::new(BackendConfig::fixed("cached", dir.path()), OracleContext::default()).unwrap();
        fixed.complete(&req("p")).unwrap();
        let mut cfg = BackendConfig::new(BackendKind::Replay, dir.path());
        cfg.replay_of = Some(BackendKind::FixedText);
        let replay = Gateway::new(cfg, OracleContext::default()).unwrap();
        assert_eq!(replay.complete(&req("p")).unwrap().text, "cached");
        assert!(matches!(replay.complete(&req("q")), Err(GatewayError::CacheMiss(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = BackendConfig::fixed("x", dir.path());
        cfg.max_inflight = 0;
        assert!(Gateway::new(cfg, OracleContext::default()).is_err());
        let cfg = BackendConfig::new(BackendKind::HttpOpenaiCompatible, dir.path());
        assert!(Gateway::new(cfg, OracleContext::default()).is_err());
    }

    #[test]
    fn oracle_backend_uses_hint() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = OracleContext {
            labels: Some(vec![0, 0, 1]),
            ..OracleContext::default()
        };
        let gw = Gateway::new(BackendConfig::new(BackendKind::OracleEp, dir.path()), ctx).unwrap();
        let set = TemplateSet::default();
        let bind = |a: &str, b: &str| -> BTreeMap<String, String> {
            [("text_a", a), ("text_b", b), ("class_list", "x, y")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        };
        let p = set.render(TemplateId::EdgePredict, bind("a", "b")).unwrap();
        assert_eq!(gw.complete(&gw.request(&p, 0, Some(1))).unwrap().text, "True");
        let p = set.render(TemplateId::EdgePredict, bind("a", "c")).unwrap();
        assert_eq!(gw.complete(&gw.request(&p, 0, Some(2))).unwrap().text, "False");
    }

    struct Probe {
        live: AtomicUsize,
        peak: AtomicUsize,
        calls: AtomicUsize,
    }

    struct ProbeBackend(Arc<Probe>);

    impl Backend for ProbeBackend {
        fn call(&self, request: &ChatRequest) -> Result<String, BackendError> {
            let p = &self.0;
            p.calls.fetch_add(1, Ordering::SeqCst);
            let now = p.live.fetch_add(1, Ordering::SeqCst) + 1;
            p.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(3));
            p.live.fetch_sub(1, Ordering::SeqCst);
            Ok(format!("echo {}", request.prompt))
        }
    }

    #[test]
    fn batch_dispatch_is_bounded_ordered_and_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let probe = Arc::new(Probe {
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        });
        let mut cfg = BackendConfig::new(BackendKind::FixedText, dir.path());
        cfg.fixed_text = Some(String::new());
        cfg.max_inflight = 3;
        let gw = Gateway::with_backend(cfg, Box::new(ProbeBackend(probe.clone()))).unwrap();
        let mut requests: Vec<ChatRequest> = (0..40).map(|i| req(&format!("p{i}"))).collect();
        requests.push(req("p7"));
        let out = gw.complete_many(&requests);
        assert!(probe.peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(probe.calls.load(Ordering::SeqCst), 40);
        for (r, o) in requests.iter().zip(&out) {
            assert_eq!(o.as_ref().unwrap().text, format!("echo {}", r.prompt));
        }
        assert!(out[40].as_ref().unwrap().from_cache);

        // Concurrent callers share the same bound.
        let fresh: Vec<ChatRequest> = (0..30).map(|i| req(&format!("q{i}"))).collect();
        std::thread::scope(|s| {
            for chunk in fresh.chunks(10) {
                let gw = &gw;
                s.spawn(move || gw.complete_many(chunk));
            }
        });
        assert!(probe.peak.load(Ordering::SeqCst) <= 3);
    }
}
