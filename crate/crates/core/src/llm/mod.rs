//! Chat-completion gateway.
//!
//! Every model call in the workbench goes through an [`LlmSession`]. A session
//! wraps one [`ChatBackend`] instance, checks requests against the configured
//! context limit before anything is sent, retries transport failures with
//! exponential backoff and keeps per-call usage estimates.
//!
//! Backends are opened per session by a [`Gateway`]. The scripted backend gives
//! each session its own cursor, so interleaved sessions never steal each
//! other's responses.

mod http;
mod scripted;
mod tokens;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{RequestLog, Script, ScriptEntry, ScriptFailure, ScriptedBackend, ScriptedFactory};
pub use tokens::{estimate_tokens, HeuristicEstimator, TokenEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self { messages, max_tokens: 512, temperature: 0.0, stop_sequences: Vec::new() }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop_sequences.push(stop.into());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| LlmError::InvalidRequest("request has no messages".into()))?;
        if first.role == Role::Assistant {
            return Err(LlmError::InvalidRequest(
                "first message must be a system or user message".into(),
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// All message contents joined by newlines.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("context length exceeded: {size} tokens (limit {limit})")]
    ContextOverflow { size: usize, limit: usize },
    #[error("backend error: {0}")]
    Fatal(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("context length exceeded: request needs {size} tokens but the limit is {limit}")]
    ContextOverflow { size: usize, limit: usize },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("{0}")]
    Backend(String),
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
    }
}

/// A chat-completion provider. One instance serves one session.
pub trait ChatBackend: Send {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError>;

    fn describe(&self) -> String {
        "backend".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    /// Drives the agent loop and the baselines.
    Planner,
    /// Summarization and tool-internal question answering.
    Utility,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelRole::Planner => f.write_str("planner"),
            ModelRole::Utility => f.write_str("utility"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "duration_ms")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    /// Policy with the standard attempt count and no sleeping; for tests.
    pub fn immediate() -> Self {
        Self { max_attempts: 3, base_delay: Duration::ZERO }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no delay before the first
        if attempt <= 1 {
            return Duration::ZERO;
        }
        self.base_delay * 2u32.saturating_pow(attempt - 2)
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallUsage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: Vec<CallUsage>,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

impl Usage {
    fn record(&mut self, call: CallUsage) {
        self.prompt_tokens += call.prompt_tokens;
        self.completion_tokens += call.completion_tokens;
        self.calls.push(call);
    }

    pub fn total_tokens(&self) -> usize {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSettings {
    pub context_limit: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub retry: RetryPolicy,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self { context_limit: 8192, max_tokens: 512, temperature: 0.0, retry: RetryPolicy::default() }
    }
}

/// Sequential conversation channel to one backend instance.
pub struct LlmSession {
    backend: Box<dyn ChatBackend>,
    role: ModelRole,
    settings: SessionSettings,
    estimator: Arc<dyn TokenEstimator>,
    usage: Usage,
    attempts: u64,
}

impl fmt::Debug for LlmSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmSession")
            .field("backend", &self.backend.describe())
            .field("role", &self.role)
            .field("calls", &self.usage.calls.len())
            .finish()
    }
}

impl LlmSession {
    pub fn new(backend: Box<dyn ChatBackend>, role: ModelRole, settings: SessionSettings) -> Self {
        Self {
            backend,
            role,
            settings,
            estimator: Arc::new(HeuristicEstimator),
            usage: Usage::default(),
            attempts: 0,
        }
    }

    /// Session over a scripted backend with default settings and no retry delay.
    pub fn scripted(script: Script, role: ModelRole) -> Self {
        let settings = SessionSettings { retry: RetryPolicy::immediate(), ..SessionSettings::default() };
        Self::new(Box::new(ScriptedBackend::new(Arc::new(script))), role, settings)
    }

    pub fn with_estimator(mut self, estimator: Arc<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn role(&self) -> ModelRole {
        self.role
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn usage(&self) -> &Usage {
        &self.usage
    }

    /// Completed calls (successful completions).
    pub fn calls(&self) -> usize {
        self.usage.calls.len()
    }

    /// Backend attempts including failed and retried ones.
    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn estimate(&self, text: &str) -> usize {
        self.estimator.estimate(text)
    }

    /// Estimated prompt tokens, or the overflow error if the prompt plus the
    /// completion allowance does not fit the context window.
    pub fn check_fits(&self, request: &ChatRequest) -> Result<usize, LlmError> {
        let prompt = self.prompt_tokens(request);
        let size = prompt + request.max_tokens as usize;
        if size > self.settings.context_limit {
            return Err(LlmError::ContextOverflow { size, limit: self.settings.context_limit });
        }
        Ok(prompt)
    }

    fn prompt_tokens(&self, request: &ChatRequest) -> usize {
        request.messages.iter().map(|m| self.estimator.estimate(&m.content)).sum()
    }

    /// Request template carrying this session's defaults.
    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            messages,
            max_tokens: self.settings.max_tokens,
            temperature: self.settings.temperature,
            stop_sequences: Vec::new(),
        }
    }

    pub fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let prompt_tokens = self.check_fits(request)?;
        let policy = self.settings.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let delay = policy.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            self.attempts += 1;
            match self.backend.complete(request) {
                Ok(text) => {
                    let completion_tokens = self.estimator.estimate(&text);
                    self.usage.record(CallUsage { prompt_tokens, completion_tokens });
                    return Ok(text);
                }
                Err(BackendError::Transport(message)) => {
                    tracing::warn!(role = %self.role, attempt, %message, "transport failure");
                    if attempt >= policy.max_attempts {
                        return Err(LlmError::Transport { attempts: attempt, message });
                    }
                }
                Err(BackendError::ContextOverflow { size, limit }) => {
                    return Err(LlmError::ContextOverflow { size, limit })
                }
                Err(BackendError::Fatal(message)) => return Err(LlmError::Backend(message)),
            }
        }
    }

    /// One-shot helper: a system instruction and a user message.
    pub fn ask(&mut self, system: &str, user: &str) -> Result<String, LlmError> {
        let request = self.request(vec![ChatMessage::system(system), ChatMessage::user(user)]);
        self.complete(&request)
    }
}

/// Opens backend instances for sessions.
pub trait BackendFactory: Send + Sync {
    fn open(&self, role: ModelRole) -> Box<dyn ChatBackend>;
}

/// Shareable entry point handing out per-session backends for the planner and
/// utility roles.
#[derive(Clone)]
pub struct Gateway {
    factory: Arc<dyn BackendFactory>,
    planner: SessionSettings,
    utility: SessionSettings,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("planner", &self.planner).field("utility", &self.utility).finish()
    }
}

impl Gateway {
    pub fn new(factory: Arc<dyn BackendFactory>, planner: SessionSettings, utility: SessionSettings) -> Self {
        Self { factory, planner, utility }
    }

    /// Gateway whose sessions replay the given scripts.
    pub fn scripted(planner: Script, utility: Script) -> Self {
        let settings = SessionSettings { retry: RetryPolicy::immediate(), ..SessionSettings::default() };
        Self::new(Arc::new(ScriptedFactory::new(planner, utility)), settings, settings)
    }

    pub fn session(&self, role: ModelRole) -> LlmSession {
        let settings = match role {
            ModelRole::Planner => self.planner,
            ModelRole::Utility => self.utility,
        };
        LlmSession::new(self.factory.open(role), role, settings)
    }
}
