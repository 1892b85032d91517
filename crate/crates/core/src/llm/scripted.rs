use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendFactory, ChatBackend, ChatRequest, ModelRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptFailure {
    Transport,
    Fatal,
}

/// One scripted response.
///
/// An entry answers a request when `when_contains` is unset or occurs in the
/// request's prompt text. Entries are consumed once unless `repeat` is set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when_contains: Option<String>,
    #[serde(default)]
    pub response: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<ScriptFailure>,
}

impl ScriptEntry {
    pub fn text(response: impl Into<String>) -> Self {
        Self { response: response.into(), ..Self::default() }
    }

    pub fn when(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self { when_contains: Some(needle.into()), response: response.into(), ..Self::default() }
    }

    pub fn repeating(response: impl Into<String>) -> Self {
        Self { response: response.into(), repeat: true, ..Self::default() }
    }

    pub fn failure(kind: ScriptFailure) -> Self {
        Self { fail: Some(kind), ..Self::default() }
    }

    fn accepts(&self, prompt: &str) -> bool {
        self.when_contains.as_deref().is_none_or(|needle| prompt.contains(needle))
    }
}

/// Immutable ordered list of scripted responses.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    pub fn responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(responses.into_iter().map(ScriptEntry::text).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Shared record of every request a scripted backend received.
#[derive(Debug, Clone, Default)]
pub struct RequestLog(Arc<Mutex<Vec<ChatRequest>>>);

impl RequestLog {
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.0.lock().expect("request log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("request log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, request: &ChatRequest) {
        self.0.lock().expect("request log poisoned").push(request.clone());
    }
}

/// Deterministic backend replaying a [`Script`]. Each instance has its own
/// cursor; the script itself is shared.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Arc<Script>,
    consumed: Vec<bool>,
    served: usize,
    log: Option<RequestLog>,
}

impl ScriptedBackend {
    pub fn new(script: Arc<Script>) -> Self {
        let consumed = vec![false; script.entries.len()];
        Self { script, consumed, served: 0, log: None }
    }

    pub fn with_log(mut self, log: RequestLog) -> Self {
        self.log = Some(log);
        self
    }

    /// Index of the first unconsumed entry.
    pub fn cursor(&self) -> usize {
        self.consumed.iter().position(|c| !c).unwrap_or(self.consumed.len())
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, BackendError> {
        if let Some(log) = &self.log {
            log.push(request);
        }
        let prompt = request.prompt_text();
        let found = self
            .script
            .entries
            .iter()
            .enumerate()
            .find(|(i, entry)| !self.consumed[*i] && entry.accepts(&prompt));
        let Some((index, entry)) = found else {
            return Err(BackendError::Fatal(format!(
                "script exhausted after {} responses",
                self.served
            )));
        };
        if !entry.repeat {
            self.consumed[index] = true;
        }
        self.served += 1;
        match entry.fail {
            Some(ScriptFailure::Transport) => {
                Err(BackendError::Transport("scripted transport failure".into()))
            }
            Some(ScriptFailure::Fatal) => Err(BackendError::Fatal("scripted fatal failure".into())),
            None => Ok(entry.response.clone()),
        }
    }

    fn describe(&self) -> String {
        format!("scripted({} entries)", self.script.entries.len())
    }
}

/// Factory giving every session a fresh cursor over the role's script.
#[derive(Debug, Clone, Default)]
pub struct ScriptedFactory {
    planner: Arc<Script>,
    utility: Arc<Script>,
    log: Option<RequestLog>,
}

impl ScriptedFactory {
    pub fn new(planner: Script, utility: Script) -> Self {
        Self { planner: Arc::new(planner), utility: Arc::new(utility), log: None }
    }

    pub fn with_log(mut self, log: RequestLog) -> Self {
        self.log = Some(log);
        self
    }
}

impl BackendFactory for ScriptedFactory {
    fn open(&self, role: ModelRole) -> Box<dyn ChatBackend> {
        let script = match role {
            ModelRole::Planner => self.planner.clone(),
            ModelRole::Utility => self.utility.clone(),
        };
        let backend = ScriptedBackend::new(script);
        match &self.log {
            Some(log) => Box::new(backend.with_log(log.clone())),
            None => Box::new(backend),
        }
    }
}
