//! OpenAI-compatible HTTP endpoints: chat completions and embeddings.

use std::env;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::retry::BackendError;
use super::{Backend, ChatRequest, GatewayError};

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedReply {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

/// Blocking client for one base URL. The bearer token is read from the named
/// environment variable on first use, so fully cached runs need no key.
pub struct HttpClient {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key_env_var: String,
}

impl HttpClient {
    pub fn new(base_url: &str, api_key_env_var: &str, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_owned(),
            api_key_env_var: api_key_env_var.to_owned(),
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, route: &str, body: &B) -> Result<R, BackendError> {
        let key = env::var(&self.api_key_env_var)
            .map_err(|_| BackendError::Fatal(GatewayError::AuthMissing(self.api_key_env_var.clone())))?;
        let response = self
            .client
            .post(format!("{}/{route}", self.base_url))
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let message = response.text().unwrap_or_default();
            return Err(BackendError::Rejected {
                status: status.as_u16(),
                message,
            });
        }
        let bytes = response.bytes().map_err(|e| BackendError::Transient(e.to_string()))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Fatal(GatewayError::MalformedResponse(e.to_string())))
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = ChatBody {
            model: &request.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let reply: ChatReply = self.post("chat/completions", &body)?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal(GatewayError::MalformedResponse("no choices[0].message.content".into())))
    }

    /// One vector per input, reordered by the reply's `index` field when given.
    pub fn embeddings(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let reply: EmbedReply = self.post("embeddings", &EmbedBody { model, input: inputs })?;
        if reply.data.len() != inputs.len() {
            return Err(BackendError::Fatal(GatewayError::MalformedResponse(format!(
                "{} embeddings for {} inputs",
                reply.data.len(),
                inputs.len()
            ))));
        }
        let mut out = vec![Vec::new(); inputs.len()];
        for (pos, item) in reply.data.into_iter().enumerate() {
            let slot = item.index.unwrap_or(pos);
            if slot >= out.len() {
                return Err(BackendError::Fatal(GatewayError::MalformedResponse(format!("index {slot} out of range"))));
            }
            out[slot] = item.embedding;
        }
        Ok(out)
    }
}

impl Backend for HttpClient {
    fn call(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.chat(request)
    }
}
