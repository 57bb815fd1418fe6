//! Chat-completion and embedding providers.
//!
//! Everything above this module talks to the [`ChatProvider`] and
//! [`EmbeddingProvider`] traits. Two families of implementations exist: an
//! OpenAI-compatible HTTP adapter ([`openai`]) and fully deterministic offline
//! mocks ([`mock`]).

pub mod mock;
pub mod openai;

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorClass;

pub use mock::{mock_embed, FixtureRule, MockChat, MockEmbedder};
pub use openai::{HttpTransport, OpenAiChat, OpenAiEmbedder, Transport, TransportError, UreqTransport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Transport-level failure that survived every retry.
    #[error("provider request failed after {attempts} attempt(s): {message}")]
    Retriable { attempts: u32, message: String },

    #[error("provider rejected request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },

    #[error("provider returned an empty completion")]
    EmptyCompletion,

    #[error("malformed provider response: {0}")]
    MalformedResponse(String),

    #[error("embedding dimension mismatch at input {position}: expected {expected}, got {found}")]
    DimensionMismatch {
        position: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid provider input: {0}")]
    InvalidInput(String),

    #[error("API key environment variable `{0}` is not set")]
    MissingApiKey(String),
}

impl ProviderError {
    pub fn class(&self) -> ErrorClass {
        match self {
            // a batch with mixed dimensions means the stored vectors cannot be trusted
            ProviderError::DimensionMismatch { .. } => ErrorClass::Data,
            ProviderError::InvalidInput(_) => ErrorClass::Data,
            _ => ErrorClass::Provider,
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, ProviderError::Retriable { .. })
    }
}

/// A dense embedding. Construction guarantees every value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.is_empty() {
            return Err(ProviderError::MalformedResponse("empty embedding".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProviderError::MalformedResponse(format!(
                "non-finite embedding component at position {pos}"
            )));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = ProviderError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// A temperature-0 request, the only kind the pipeline issues.
    pub fn deterministic(system_text: impl Into<String>, user_text: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: 0.0,
            max_tokens,
        }
    }
}

/// Endpoint and model settings. The API key itself never lives here, only the
/// name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub api_key_env_var: String,
    pub chat_model_id: String,
    pub embed_model_id: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Base delay for exponential backoff between retries.
    pub backoff_ms: u64,
    /// Maximum in-flight requests per client.
    pub concurrency: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            chat_model_id: "gpt-4.1-mini".into(),
            embed_model_id: "text-embedding-3-large".into(),
            timeout_secs: 30,
            max_retries: 3,
            backoff_ms: 500,
            concurrency: 4,
        }
    }
}

impl ProviderConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

pub trait ChatProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Raw completion text. May be empty; [`chat_complete`] turns that into
    /// [`ProviderError::EmptyCompletion`].
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// One vector per input text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl fmt::Debug for dyn ChatProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChatProvider({})", self.model_id())
    }
}

impl fmt::Debug for dyn EmbeddingProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmbeddingProvider({})", self.model_id())
    }
}

/// Embeds `texts`, checking the arity and dimension contract of the provider.
pub fn embed_texts(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::InvalidInput("no texts to embed".into()));
    }
    if let Some(pos) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::InvalidInput(format!("text {pos} is blank")));
    }
    let vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::MalformedResponse(format!(
            "expected {} embeddings, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    let expected = vectors[0].dim();
    if let Some((position, v)) = vectors.iter().enumerate().find(|(_, v)| v.dim() != expected) {
        return Err(ProviderError::DimensionMismatch {
            position,
            expected,
            found: v.dim(),
        });
    }
    Ok(vectors)
}

/// Embeds in fixed-size chunks, preserving order.
pub fn embed_in_batches(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    batch: usize,
) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch.max(1)) {
        out.extend(embed_texts(provider, chunk)?);
    }
    if let Some(first) = out.first() {
        let expected = first.dim();
        if let Some((position, v)) = out.iter().enumerate().find(|(_, v)| v.dim() != expected) {
            return Err(ProviderError::DimensionMismatch {
                position,
                expected,
                found: v.dim(),
            });
        }
    }
    Ok(out)
}

/// Runs a chat completion and rejects empty output.
pub fn chat_complete(provider: &dyn ChatProvider, req: &ChatRequest) -> Result<String, ProviderError> {
    if req.user_text.trim().is_empty() {
        return Err(ProviderError::InvalidInput("empty user text".into()));
    }
    let out = provider.complete(req)?;
    if out.trim().is_empty() {
        return Err(ProviderError::EmptyCompletion);
    }
    Ok(out)
}

/// Counting semaphore bounding in-flight provider calls.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        SemaphoreGuard { sem: self }
    }
}

pub struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.sem.permits.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.sem.cv.notify_one();
    }
}
