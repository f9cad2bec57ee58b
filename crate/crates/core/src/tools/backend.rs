//! Chat-completion backends and the model pool.
//!
//! The HTTP backend speaks the common open chat-completions schema:
//! `POST {base_url}/chat/completions` with `model`, `messages`,
//! `temperature` and `max_tokens`; the reply's first choice and `usage`
//! block are read back.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ConfigError;

pub const DEFAULT_MAX_TOKENS: u32 = 24_576;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MODEL_TIMEOUT_MS: u64 = 120_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_id: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_timeout_ms() -> u64 {
    DEFAULT_MODEL_TIMEOUT_MS
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            timeout_ms: DEFAULT_MODEL_TIMEOUT_MS,
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::invalid("model_id", "must be non-empty"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::invalid(
                "temperature",
                "must be a finite value >= 0",
            ));
        }
        if self.max_tokens == 0 {
            return Err(ConfigError::invalid("max_tokens", "must be positive"));
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::invalid("timeout_ms", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Request body of the chat-completions call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(endpoint: &ModelEndpoint, messages: Vec<ChatMessage>) -> Self {
        Self {
            model: endpoint.model_id.clone(),
            messages,
            temperature: endpoint.temperature,
            max_tokens: endpoint.max_tokens,
        }
    }

    pub fn system_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == "system")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatCompletion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl ChatCompletion {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
}

impl BackendError {
    /// Infrastructure flakes worth one retry.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Network(_) | BackendError::Timeout => true,
            BackendError::Http { status, .. } => *status >= 500 || *status == 429,
            BackendError::InvalidResponse(_) => false,
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
    ) -> Result<ChatCompletion, BackendError>;
}

/// HTTP client for chat-completions endpoints.
#[derive(Debug, Clone, Default)]
pub struct HttpChatBackend {
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpChatBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

pub(crate) fn map_reqwest_error(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Network(e.to_string())
    }
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn complete(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
    ) -> Result<ChatCompletion, BackendError> {
        let url = format!(
            "{}/chat/completions",
            endpoint.base_url.trim_end_matches('/')
        );
        let mut builder = self
            .client
            .post(url)
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .json(request);
        if let Some(var) = &endpoint.api_key_env {
            if let Ok(key) = std::env::var(var) {
                builder = builder.bearer_auth(key);
            }
        }
        let resp = builder.send().await.map_err(map_reqwest_error)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(BackendError::Http {
                status: status.as_u16(),
                body,
            });
        }
        let wire: WireResponse = resp
            .json()
            .await
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        let text = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                BackendError::InvalidResponse("no message content in first choice".into())
            })?;
        let usage = wire.usage.unwrap_or(WireUsage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(ChatCompletion {
            text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        })
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync;

/// Deterministic backend driven by a closure; counts requests.
///
/// Token usage is the whitespace word count of the request and reply.
pub struct ScriptedChatBackend {
    responder: Box<Responder>,
    delay: Duration,
    calls: AtomicUsize,
}

impl ScriptedChatBackend {
    pub fn new<F>(responder: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        Self {
            responder: Box::new(responder),
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
        }
    }

    /// Always answers with `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(text.clone()))
    }

    /// Replies with `replies[i % len]` for the i-th request.
    pub fn sequence(replies: Vec<String>) -> Self {
        let counter = AtomicUsize::new(0);
        Self::new(move |_| {
            let i = counter.fetch_add(1, Ordering::SeqCst);
            Ok(replies[i % replies.len()].clone())
        })
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

pub(crate) fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

#[async_trait]
impl ChatBackend for ScriptedChatBackend {
    async fn complete(
        &self,
        _endpoint: &ModelEndpoint,
        request: &ChatRequest,
    ) -> Result<ChatCompletion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let text = (self.responder)(request)?;
        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| word_count(&m.content))
            .sum();
        Ok(ChatCompletion {
            completion_tokens: word_count(&text),
            prompt_tokens,
            text,
        })
    }
}

/// Named model endpoints sharing one backend, with a designated default.
#[derive(Clone)]
pub struct ModelPool {
    endpoints: BTreeMap<String, ModelEndpoint>,
    default_model: String,
    backend: Arc<dyn ChatBackend>,
}

impl std::fmt::Debug for ModelPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelPool")
            .field("endpoints", &self.endpoints.keys().collect::<Vec<_>>())
            .field("default_model", &self.default_model)
            .finish()
    }
}

impl ModelPool {
    /// `endpoints` is keyed by model id.
    pub fn new(
        endpoints: BTreeMap<String, ModelEndpoint>,
        default_model: impl Into<String>,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self, ConfigError> {
        let default_model = default_model.into();
        if endpoints.is_empty() {
            return Err(ConfigError::invalid("models", "model pool is empty"));
        }
        if !endpoints.contains_key(&default_model) {
            return Err(ConfigError::invalid(
                "default_model",
                format!("`{default_model}` is not in the model pool"),
            ));
        }
        for ep in endpoints.values() {
            ep.validate()?;
        }
        Ok(Self {
            endpoints,
            default_model,
            backend,
        })
    }

    /// Pool over the given endpoints using the HTTP backend.
    pub fn http(
        endpoints: Vec<ModelEndpoint>,
        default_model: impl Into<String>,
    ) -> Result<Self, ConfigError> {
        let map = endpoints
            .into_iter()
            .map(|e| (e.model_id.clone(), e))
            .collect();
        Self::new(map, default_model, Arc::new(HttpChatBackend::new()))
    }

    pub fn default_model(&self) -> &str {
        &self.default_model
    }

    pub fn endpoint(&self, model_id: &str) -> Option<&ModelEndpoint> {
        self.endpoints.get(model_id)
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.endpoints.keys().map(String::as_str)
    }

    pub fn backend(&self) -> &Arc<dyn ChatBackend> {
        &self.backend
    }

    pub async fn complete(
        &self,
        model_id: &str,
        messages: Vec<ChatMessage>,
    ) -> Result<ChatCompletion, PoolError> {
        let endpoint = self
            .endpoint(model_id)
            .ok_or_else(|| PoolError::UnknownModel(model_id.to_string()))?;
        let request = ChatRequest::new(endpoint, messages);
        self.backend
            .complete(endpoint, &request)
            .await
            .map_err(PoolError::Backend)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PoolError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_with(backend: Arc<dyn ChatBackend>) -> ModelPool {
        let mut eps = BTreeMap::new();
        eps.insert("m".to_string(), ModelEndpoint::new("http://unused", "m"));
        ModelPool::new(eps, "m", backend).unwrap()
    }

    #[test]
    fn endpoint_defaults() {
        let ep = ModelEndpoint::new("http://x", "m");
        assert_eq!(ep.temperature, 1.0);
        assert_eq!(ep.max_tokens, 24_576);
        assert!(ep.validate().is_ok());
        let bad = ModelEndpoint {
            temperature: -0.5,
            ..ep
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_pool_is_rejected() {
        let err = ModelPool::new(
            BTreeMap::new(),
            "m",
            Arc::new(ScriptedChatBackend::constant("x")),
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn default_must_be_in_pool() {
        let mut eps = BTreeMap::new();
        eps.insert("a".to_string(), ModelEndpoint::new("http://x", "a"));
        assert!(ModelPool::new(eps, "b", Arc::new(ScriptedChatBackend::constant("x"))).is_err());
    }

    #[tokio::test]
    async fn scripted_backend_counts_and_reports_usage() {
        let backend = Arc::new(ScriptedChatBackend::constant("two words"));
        let pool = pool_with(backend.clone());
        let out = pool
            .complete(
                "m",
                vec![ChatMessage::system("a b c"), ChatMessage::user("d")],
            )
            .await
            .unwrap();
        assert_eq!(out.prompt_tokens, 4);
        assert_eq!(out.completion_tokens, 2);
        assert_eq!(backend.calls(), 1);
        assert!(matches!(
            pool.complete("nope", vec![]).await,
            Err(PoolError::UnknownModel(_))
        ));
    }

    #[tokio::test]
    async fn unreachable_http_endpoint_is_a_network_error() {
        let mut ep = ModelEndpoint::new("http://127.0.0.1:9", "m");
        ep.timeout_ms = 2_000;
        let req = ChatRequest::new(&ep, vec![ChatMessage::user("hi")]);
        let err = HttpChatBackend::new()
            .complete(&ep, &req)
            .await
            .unwrap_err();
        assert!(
            matches!(err, BackendError::Network(_) | BackendError::Timeout),
            "{err:?}"
        );
        assert!(err.is_transient());
    }
}
