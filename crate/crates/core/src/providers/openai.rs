//! OpenAI-compatible HTTP adapter (`/chat/completions`, `/embeddings`).
//!
//! The wire layer is a [`Transport`] so retry and response handling can be
//! exercised with a scripted fake.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingVector, ProviderConfig, ProviderError, Semaphore};

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Connection, timeout, 429 or 5xx: worth retrying.
    Transient(String),
    /// Any other non-success status.
    Status { status: u16, body: String },
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<Value, TransportError>;
}

/// Blocking HTTP transport backed by `ureq`.
#[derive(Debug, Default, Clone)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        let resp = ureq::post(url)
            .timeout(timeout)
            .set("Authorization", &format!("Bearer {bearer}"))
            .send_json(body.clone());
        match resp {
            Ok(r) => r
                .into_json::<Value>()
                .map_err(|e| TransportError::Transient(format!("reading response body: {e}"))),
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                if status == 429 || status >= 500 {
                    Err(TransportError::Transient(format!("HTTP {status}: {body}")))
                } else {
                    Err(TransportError::Status { status, body })
                }
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient(t.to_string())),
        }
    }
}

/// Shared request machinery: endpoint, key lookup, retry, concurrency limit.
pub struct HttpTransport {
    cfg: ProviderConfig,
    transport: Arc<dyn Transport>,
    limit: Semaphore,
}

impl HttpTransport {
    pub fn new(cfg: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        let limit = Semaphore::new(cfg.concurrency);
        Self { cfg, transport, limit }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.endpoint_url.trim_end_matches('/'), path)
    }

    /// At most `max_retries + 1` attempts, with exponential backoff between them.
    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        // the key is read at call time so credential-free runs can still be
        // served from a warm cache
        let key = std::env::var(&self.cfg.api_key_env_var)
            .map_err(|_| ProviderError::MissingApiKey(self.cfg.api_key_env_var.clone()))?;
        let url = self.url(path);
        let _permit = self.limit.acquire();
        let max_attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            match self.transport.post_json(&url, &key, body, self.cfg.timeout()) {
                Ok(v) => return Ok(v),
                Err(TransportError::Status { status, body }) => return Err(ProviderError::Rejected { status, body }),
                Err(TransportError::Transient(msg)) => {
                    log::warn!("{path}: attempt {attempt}/{max_attempts} failed: {msg}");
                    last = msg;
                }
            }
            if attempt < max_attempts && self.cfg.backoff_ms > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(ProviderError::Retriable {
            attempts: max_attempts,
            message: last,
        })
    }
}

pub fn chat_request_body(model: &str, req: &ChatRequest) -> Value {
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": req.system_text},
            {"role": "user", "content": req.user_text},
        ],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

/// Extracts `choices[0].message.content`; a null content reads as empty.
pub fn parse_chat_response(v: &Value) -> Result<String, ProviderError> {
    let message = v
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| ProviderError::MalformedResponse("missing choices[0].message".into()))?;
    match message.get("content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) | None => Ok(String::new()),
        Some(other) => Err(ProviderError::MalformedResponse(format!("content is not a string: {other}"))),
    }
}

pub fn embedding_request_body(model: &str, texts: &[String]) -> Value {
    json!({ "model": model, "input": texts })
}

/// Reads `data[*].embedding`, reordered by each item's `index`.
pub fn parse_embedding_response(v: &Value, expected: usize) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::MalformedResponse("missing data array".into()))?;
    if data.len() != expected {
        return Err(ProviderError::MalformedResponse(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut slots: Vec<Option<EmbeddingVector>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = match item.get("index") {
            Some(i) => i
                .as_u64()
                .map(|i| i as usize)
                .ok_or_else(|| ProviderError::MalformedResponse(format!("bad index at item {pos}")))?,
            None => pos,
        };
        if index >= expected || slots[index].is_some() {
            return Err(ProviderError::MalformedResponse(format!("duplicate or out-of-range index {index}")));
        }
        let values = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::MalformedResponse(format!("item {pos} has no embedding array")))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| ProviderError::MalformedResponse(format!("non-numeric component in item {pos}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        slots[index] = Some(EmbeddingVector::new(values)?);
    }
    Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
}

pub struct OpenAiChat {
    http: HttpTransport,
}

impl OpenAiChat {
    pub fn new(cfg: ProviderConfig) -> Self {
        Self::with_transport(cfg, Arc::new(UreqTransport))
    }

    pub fn with_transport(cfg: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            http: HttpTransport::new(cfg, transport),
        }
    }
}

impl ChatProvider for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.http.cfg.chat_model_id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        if req.temperature == 0.0 {
            // providers do not guarantee bit-identical output even at temperature 0
            log::debug!("temperature-0 request to {}; output may still vary", self.model_id());
        }
        let body = chat_request_body(self.model_id(), req);
        parse_chat_response(&self.http.post("chat/completions", &body)?)
    }
}

pub struct OpenAiEmbedder {
    http: HttpTransport,
}

impl OpenAiEmbedder {
    pub fn new(cfg: ProviderConfig) -> Self {
        Self::with_transport(cfg, Arc::new(UreqTransport))
    }

    pub fn with_transport(cfg: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            http: HttpTransport::new(cfg, transport),
        }
    }
}

impl EmbeddingProvider for OpenAiEmbedder {
    fn model_id(&self) -> &str {
        &self.http.cfg.embed_model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let body = embedding_request_body(self.model_id(), texts);
        parse_embedding_response(&self.http.post("embeddings", &body)?, texts.len())
    }
}
