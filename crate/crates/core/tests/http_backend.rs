//! Gateway and embedding service against a local OpenAI-compatible mock.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use lansagnn::embed::{aggregate_text, EmbedError, EmbedService};
use lansagnn::gateway::{
    BackendConfig, Gateway, GatewayError, OracleContext, RenderedPrompt, TemplateId, TemplateSet,
};

type Handler = dyn Fn(usize, &str, &serde_json::Value) -> (u16, String) + Send + Sync;

struct Mock {
    url: String,
    hits: Arc<AtomicUsize>,
    auth: Arc<Mutex<Vec<String>>>,
}

/// Serve until the test process exits. `handler(hit_index, path, body)`
/// returns the status and body.
fn serve(handler: Box<Handler>) -> Mock {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let (h, a) = (hits.clone(), auth.clone());
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let n = h.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            if let Some(v) = req.headers().iter().find(|x| x.field.equiv("Authorization")) {
                a.lock().unwrap().push(v.value.to_string());
            }
            let json: serde_json::Value = serde_json::from_str(&body).unwrap_or_default();
            let (status, text) = handler(n, req.url(), &json);
            let resp = tiny_http::Response::from_string(text)
                .with_status_code(status)
                .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap());
            let _ = req.respond(resp);
        }
    });
    Mock { url, hits, auth }
}

fn chat_reply(text: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
}

/// Echo the prompt length so distinct prompts get distinct answers.
fn echo(_: usize, path: &str, body: &serde_json::Value) -> (u16, String) {
    assert_eq!(path, "/v1/chat/completions");
    let prompt = body["messages"][0]["content"].as_str().unwrap();
    (200, chat_reply(&format!("len {}", prompt.len())))
}

fn config(mock: &Mock, dir: &std::path::Path, key_var: &str) -> BackendConfig {
    std::env::set_var(key_var, "sk-test");
    BackendConfig {
        api_key_env_var: key_var.to_owned(),
        retry_base_ms: 1,
        ..BackendConfig::http(&mock.url, "mock-model", dir)
    }
}

fn prompt(text: &str) -> RenderedPrompt {
    let mut t = TemplateSet::default();
    t.set(TemplateId::Extract, "Summarize.");
    t.render(TemplateId::Extract, BTreeMap::from([("text_a".to_owned(), text.to_owned()), ("text_b".to_owned(), "b".to_owned())]))
        .unwrap()
}

#[test]
fn chat_is_cached_after_first_call() {
    let mock = serve(Box::new(echo));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_CACHE"), OracleContext::default()).unwrap();
    let req = gw.request(&prompt("hello"), 0, Some(1));
    let first = gw.complete(&req).unwrap();
    assert!(!first.from_cache);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
    assert_eq!(mock.auth.lock().unwrap()[0], "Bearer sk-test");

    // A fresh gateway over the same cache directory makes no request.
    let again = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_CACHE"), OracleContext::default()).unwrap();
    let second = again.complete(&req).unwrap();
    assert!(second.from_cache);
    assert_eq!(second.text, first.text);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
    assert_eq!(again.dispatch_count(), 0);
}

#[test]
fn batch_keeps_order_and_dedups() {
    let mock = serve(Box::new(echo));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_BATCH"), OracleContext::default()).unwrap();
    let texts = ["a", "bbbb", "a", "cc", "bbbb", "dddddd"];
    let reqs: Vec<_> = texts.iter().map(|t| gw.request(&prompt(t), 0, Some(1))).collect();
    let out: Vec<String> = gw.complete_many(&reqs).into_iter().map(|r| r.unwrap().text).collect();
    assert_eq!(out[0], out[2]);
    assert_eq!(out[1], out[4]);
    assert_ne!(out[0], out[1]);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn rate_limits_are_retried() {
    let mock = serve(Box::new(|n, p, b| if n < 2 { (429, "{}".into()) } else { echo(n, p, b) }));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_429"), OracleContext::default()).unwrap();
    let r = gw.complete(&gw.request(&prompt("x"), 0, Some(1))).unwrap();
    assert!(r.text.starts_with("len "));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
    assert_eq!(gw.dispatch_count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let mock = serve(Box::new(|_, _, _| (400, r#"{"error":"bad"}"#.into())));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_400"), OracleContext::default()).unwrap();
    let e = gw.complete(&gw.request(&prompt("x"), 0, Some(1))).unwrap_err();
    assert!(matches!(e, GatewayError::Rejected { status: 400, .. }), "{e:?}");
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let mock = serve(Box::new(|_, _, _| (503, "{}".into())));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_503"), OracleContext::default()).unwrap();
    let e = gw.complete(&gw.request(&prompt("x"), 0, Some(1))).unwrap_err();
    assert!(matches!(e, GatewayError::NetworkExhausted { attempts: 5, .. }), "{e:?}");
    assert_eq!(mock.hits.load(Ordering::SeqCst), 5);
}

#[test]
fn malformed_body_is_reported() {
    let mock = serve(Box::new(|_, _, _| (200, r#"{"choices": []}"#.into())));
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(config(&mock, dir.path(), "MOCK_KEY_MALFORMED"), OracleContext::default()).unwrap();
    let e = gw.complete(&gw.request(&prompt("x"), 0, Some(1))).unwrap_err();
    assert!(matches!(e, GatewayError::MalformedResponse(_)), "{e:?}");
}

#[test]
fn missing_key_fails_before_sending() {
    let mock = serve(Box::new(echo));
    let dir = tempfile::tempdir().unwrap();
    let cfg = BackendConfig {
        api_key_env_var: "MOCK_KEY_NEVER_SET".into(),
        ..BackendConfig::http(&mock.url, "m", dir.path())
    };
    let gw = Gateway::new(cfg, OracleContext::default()).unwrap();
    let e = gw.complete(&gw.request(&prompt("x"), 0, Some(1))).unwrap_err();
    assert!(matches!(e, GatewayError::AuthMissing(ref v) if v == "MOCK_KEY_NEVER_SET"));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 0);
}

/// Embeddings of dimension 4 (or 3 when `mixed` and the text has odd length),
/// returned in reverse order with explicit indices.
fn embed_handler(mixed: bool) -> Box<Handler> {
    Box::new(move |_, path, body| {
        assert_eq!(path, "/v1/embeddings");
        let inputs = body["input"].as_array().unwrap();
        let data: Vec<_> = inputs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, t)| {
                let len = t.as_str().unwrap().len() as f32;
                let dim = if mixed && len as usize % 2 == 1 { 3 } else { 4 };
                serde_json::json!({"index": i, "embedding": vec![len; dim]})
            })
            .collect();
        (200, serde_json::json!({"data": data}).to_string())
    })
}

fn docs(texts: &[&str]) -> Vec<Option<lansagnn::embed::AggregatedDocument>> {
    texts.iter().enumerate().map(|(i, t)| Some(aggregate_text(i, t, &[], true).unwrap())).collect()
}

#[test]
fn embeddings_follow_input_order_and_cache() {
    let mock = serve(embed_handler(false));
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&mock, dir.path(), "MOCK_KEY_EMBED");
    let svc = EmbedService::new(cfg.clone()).unwrap();
    let d = docs(&["a", "bbb", "a", "cc"]);
    let m = svc.embed(&d).unwrap();
    assert_eq!(m.dim(), 4);
    assert_eq!(m.row(1), &[3.0; 4]);
    assert_eq!(m.row(0), m.row(2));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);

    let warm = EmbedService::new(cfg).unwrap();
    assert_eq!(warm.embed(&d).unwrap(), m);
    assert_eq!(warm.dispatch_count(), 0);
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn mixed_embedding_dimensions_are_rejected() {
    let mock = serve(embed_handler(true));
    let dir = tempfile::tempdir().unwrap();
    let svc = EmbedService::new(config(&mock, dir.path(), "MOCK_KEY_MIXED")).unwrap();
    assert!(matches!(svc.embed(&docs(&["ab", "abc"])), Err(EmbedError::DimensionMismatch { .. })));
}
