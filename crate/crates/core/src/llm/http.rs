//! OpenAI-compatible chat-completion adapter over HTTPS.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, BackendFactory, ChatBackend, ChatRequest, ModelRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub planner_model: String,
    pub utility_model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            planner_model: "gpt-4".into(),
            utility_model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &HttpBackendConfig, role: ModelRole) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let model = match role {
            ModelRole::Planner => config.planner_model.clone(),
            ModelRole::Utility => config.utility_model.clone(),
        };
        Self {
            agent,
            url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
            model,
            api_key: std::env::var(&config.api_key_env).ok(),
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": request.messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        body
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(self.body(request))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let payload: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("unreadable response: {e}")))?;
        classify(status, payload)
    }

    fn describe(&self) -> String {
        format!("http({} @ {})", self.model, self.url)
    }
}

fn classify(status: u16, payload: Value) -> Result<String, BackendError> {
    match status {
        200..=299 => payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Fatal(format!("response has no message content: {payload}"))),
        408 | 429 | 500..=599 => Err(BackendError::Transport(format!("HTTP {status}: {payload}"))),
        _ => {
            let code = payload["error"]["code"].as_str().unwrap_or_default();
            if code == "context_length_exceeded" {
                // the provider does not report sizes in a structured way
                Err(BackendError::Fatal(format!("context length exceeded: {payload}")))
            } else {
                Err(BackendError::Fatal(format!("HTTP {status}: {payload}")))
            }
        }
    }
}

impl BackendFactory for HttpBackendConfig {
    fn open(&self, role: ModelRole) -> Box<dyn ChatBackend> {
        Box::new(HttpBackend::new(self, role))
    }
}
