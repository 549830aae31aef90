//! Minimal JSON-over-HTTP chat client for a local model server, plus a
//! deterministic stub provider.
//!
//! Wire protocol:
//! - `POST {base_url}/chat` with `{"model", "messages": [{"role", "content"}],
//!   "options": {"temperature", "num_ctx"}}`, answered by
//!   `{"message": {"content": ...}}` and optional `prompt_eval_count` /
//!   `eval_count` token counts.
//! - `GET {base_url}/models` answered by `{"models": [...]}` where each item
//!   is a name or `{"name", "context_length"?}`.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{PromptBundle, Role};

pub const LLM_URL_ENV: &str = "SIMRAG_LLM_URL";
pub const LLM_MODEL_ENV: &str = "SIMRAG_LLM_MODEL";
pub const STUB_MARKER: &str = "[stub-response]";
/// Concurrent requests allowed per base URL.
pub const MAX_CONCURRENT_REQUESTS: usize = 4;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("model server unreachable: {0}")]
    Unreachable(String),
    #[error("model server rejected the request with status {status}: {body}")]
    BadStatus { status: u16, body: String },
    #[error("malformed response from model server: {0}")]
    MalformedResponse(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: WireRole,
    pub content: String,
}

impl WireMessage {
    pub fn new(role: WireRole, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_context_tokens: usize,
    pub timeout_s: f64,
}

impl LlmRequest {
    pub fn new(model: impl Into<String>, messages: Vec<WireMessage>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_context_tokens: 8192,
            timeout_s: 300.0,
        }
    }

    /// System prompt plus context, then history, then the user prompt.
    pub fn from_bundle(model: impl Into<String>, bundle: &PromptBundle) -> Self {
        let mut messages = vec![WireMessage::new(WireRole::System, bundle.system_with_context())];
        for m in &bundle.history {
            let role = match m.role {
                Role::Assistant => WireRole::Assistant,
                Role::User | Role::ValidatorFeedback => WireRole::User,
                Role::System => continue,
            };
            messages.push(WireMessage::new(role, m.content.clone()));
        }
        messages.push(WireMessage::new(WireRole::User, bundle.user.clone()));
        Self::new(model, messages)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("messages must not be empty".into()));
        }
        if self.messages[1..].iter().any(|m| m.role == WireRole::System) {
            return Err(LlmError::InvalidRequest("system message must come first".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_context_tokens == 0 || self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(LlmError::InvalidRequest(
                "max_context_tokens and timeout_s must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Body of `POST /chat`.
    pub fn to_wire(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": self.messages,
            "options": {
                "temperature": self.temperature,
                "num_ctx": self.max_context_tokens,
            },
        })
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == WireRole::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub content: String,
    pub model: String,
    pub prompt_token_count: Option<u64>,
    pub completion_token_count: Option<u64>,
    pub latency_ms: u64,
    /// Attempts beyond the first that were needed.
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    HttpChat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: Option<String>,
    pub retry_max: u32,
    pub retry_backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Stub,
            base_url: None,
            retry_max: 2,
            retry_backoff_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn stub() -> Self {
        Self::default()
    }

    pub fn http(base_url: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::HttpChat,
            base_url: Some(base_url.into()),
            ..Self::default()
        }
    }

    /// Fill a missing base URL from `SIMRAG_LLM_URL`.
    pub fn with_env(mut self) -> Self {
        if self.base_url.is_none() {
            self.base_url = std::env::var(LLM_URL_ENV).ok();
        }
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.kind == ProviderKind::HttpChat && self.base_url.is_none() {
            return Err(LlmError::InvalidRequest(
                "http_chat provider requires base_url".into(),
            ));
        }
        if self.retry_backoff_ms == 0 {
            return Err(LlmError::InvalidRequest(
                "retry_backoff_ms must be positive".into(),
            ));
        }
        Ok(())
    }

    fn endpoint(&self, path: &str) -> String {
        let base = self.base_url.as_deref().unwrap_or_default().trim_end_matches('/');
        format!("{base}/{path}")
    }
}

pub fn generate(request: &LlmRequest, provider: &ProviderConfig) -> Result<LlmResponse, LlmError> {
    request.validate()?;
    provider.validate()?;
    match provider.kind {
        ProviderKind::Stub => Ok(stub_generate(request)),
        ProviderKind::HttpChat => http_generate(request, provider),
    }
}

/// Lines of the form `[source: ...]` across all messages, in order.
pub fn context_headers(request: &LlmRequest) -> Vec<&str> {
    request
        .messages
        .iter()
        .flat_map(|m| m.content.lines())
        .filter(|l| l.starts_with("[source: ") && l.ends_with(']'))
        .collect()
}

fn stub_generate(request: &LlmRequest) -> LlmResponse {
    let prompt: String = request
        .last_user_message()
        .unwrap_or_default()
        .chars()
        .take(64)
        .collect();
    let mut content = format!("{STUB_MARKER}\nprompt: {prompt}\ncontext:");
    for header in context_headers(request) {
        content.push('\n');
        content.push_str(header);
    }
    LlmResponse {
        content,
        model: "stub".into(),
        prompt_token_count: None,
        completion_token_count: None,
        latency_ms: 0,
        retries: 0,
    }
}

#[derive(Deserialize)]
struct ChatReply {
    message: Option<ChatReplyMessage>,
    model: Option<String>,
    prompt_eval_count: Option<u64>,
    eval_count: Option<u64>,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: Option<String>,
}

fn http_generate(request: &LlmRequest, provider: &ProviderConfig) -> Result<LlmResponse, LlmError> {
    let timeout = Duration::from_secs_f64(request.timeout_s);
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| LlmError::Unreachable(e.to_string()))?;
    let url = provider.endpoint("chat");
    let body = request.to_wire();
    let _permit = limiter(&url).acquire();

    let started = Instant::now();
    let mut attempt = 0u32;
    let text = loop {
        let failure = match client.post(&url).json(&body).send() {
            Ok(resp) if resp.status().is_success() => {
                break resp
                    .text()
                    .map_err(|e| LlmError::MalformedResponse(e.to_string()))?
            }
            Ok(resp) if resp.status().is_client_error() => {
                let status = resp.status().as_u16();
                return Err(LlmError::BadStatus {
                    status,
                    body: resp.text().unwrap_or_default(),
                });
            }
            Ok(resp) => format!("status {}", resp.status().as_u16()),
            Err(e) if e.is_timeout() => return Err(LlmError::Timeout(timeout)),
            Err(e) => e.to_string(),
        };
        if attempt >= provider.retry_max {
            return Err(LlmError::Unreachable(format!(
                "{url}: {failure} after {} attempts",
                attempt + 1
            )));
        }
        tracing::debug!(attempt, %failure, "retrying chat request");
        attempt += 1;
        std::thread::sleep(Duration::from_millis(provider.retry_backoff_ms));
    };

    let reply: ChatReply =
        serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = reply
        .message
        .and_then(|m| m.content)
        .ok_or_else(|| LlmError::MalformedResponse("missing message.content".into()))?;
    if content.is_empty() && reply.eval_count != Some(0) {
        return Err(LlmError::MalformedResponse(
            "empty completion without an explicit zero-length report".into(),
        ));
    }
    Ok(LlmResponse {
        content,
        model: reply.model.unwrap_or_else(|| request.model.clone()),
        prompt_token_count: reply.prompt_eval_count,
        completion_token_count: reply.eval_count,
        latency_ms: started.elapsed().as_millis() as u64,
        retries: attempt,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_length: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelItem {
    Name(String),
    Info(ModelInfo),
}

#[derive(Deserialize)]
struct ModelList {
    models: Vec<ModelItem>,
}

pub fn list_models(provider: &ProviderConfig) -> Result<Vec<ModelInfo>, LlmError> {
    provider.validate()?;
    if provider.kind == ProviderKind::Stub {
        return Ok(vec![ModelInfo {
            name: "stub".into(),
            context_length: None,
        }]);
    }
    let url = provider.endpoint("models");
    let resp = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .and_then(|c| c.get(&url).send())
        .map_err(|e| LlmError::Unreachable(format!("{url}: {e}")))?;
    if !resp.status().is_success() {
        return Err(LlmError::BadStatus {
            status: resp.status().as_u16(),
            body: resp.text().unwrap_or_default(),
        });
    }
    let text = resp
        .text()
        .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let list: ModelList =
        serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    Ok(list
        .models
        .into_iter()
        .map(|item| match item {
            ModelItem::Name(name) => ModelInfo {
                name,
                context_length: None,
            },
            ModelItem::Info(info) => info,
        })
        .collect())
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit(Arc<Semaphore>);

impl Semaphore {
    fn acquire(self: &Arc<Self>) -> Permit {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(Arc::clone(self))
    }
}

impl Drop for Permit {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.freed.notify_one();
    }
}

fn limiter(url: &str) -> Arc<Semaphore> {
    static LIMITERS: OnceLock<Mutex<HashMap<String, Arc<Semaphore>>>> = OnceLock::new();
    let key = url.trim_end_matches("/chat").to_string();
    let mut map = LIMITERS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    map.entry(key)
        .or_insert_with(|| {
            Arc::new(Semaphore {
                available: Mutex::new(MAX_CONCURRENT_REQUESTS),
                freed: Condvar::new(),
            })
        })
        .clone()
}
