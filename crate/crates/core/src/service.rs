//! Episode sessions an operator can watch and steer while they run.
//!
//! One driver thread per session runs the agent loop and is the only writer
//! of its event log; readers block on a condition variable for new events.
//! Logs are append-only JSON lines, so finished sessions survive restarts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    run_episode, AgentConfig, Decision, EpisodeEvent, EpisodeObserver, Hooks, RootCausePrediction, Supervisor, Terminal,
    Trajectory,
};
use crate::corpus::{Corpus, IncidentRecord, SummarizedIncident, Timestamp};
use crate::llm::{Gateway, LlmSession, ModelRole};
use crate::retrieval::Retriever;
use crate::simenv::{scenario_mode, Scenario};
use crate::tools::{react_toolset, HumanChannel, ReactMode, Toolset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Running,
    AwaitingApproval,
    AwaitingHuman,
    Finished,
    Aborted,
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Finished | SessionState::Aborted)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionState::Running => "running",
            SessionState::AwaitingApproval => "awaiting_approval",
            SessionState::AwaitingHuman => "awaiting_human",
            SessionState::Finished => "finished",
            SessionState::Aborted => "aborted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Thought,
    ActionProposed,
    ActionApproved,
    ActionDenied,
    Observation,
    HumanRequest,
    HumanResponse,
    Final,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// 1-based, no gaps.
    pub seq: u64,
    pub kind: EventKind,
    /// Human-readable text.
    pub payload: String,
    pub at: Timestamp,
    /// Full agent event; absent on service-generated errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<EpisodeEvent>,
}

/// Operator action on a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Response {
    Approve,
    Deny { reason: String },
    HumanAnswer { text: String },
    Interject { text: String },
    Abort,
}

impl Response {
    pub fn name(&self) -> &'static str {
        match self {
            Response::Approve => "approve",
            Response::Deny { .. } => "deny",
            Response::HumanAnswer { .. } => "human_answer",
            Response::Interject { .. } => "interject",
            Response::Abort => "abort",
        }
    }
}

/// What the session is waiting for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pending {
    Approval { step: usize, tool: String, input: String },
    Human { question: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub incident_id: String,
    pub mode: String,
    /// Replaces the source's default agent config.
    #[serde(default)]
    pub config: Option<AgentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub incident_id: String,
    pub mode: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub meta: SessionMeta,
    pub state: SessionState,
    pub pending: Option<Pending>,
    pub last_seq: u64,
    pub terminal: Option<Terminal>,
    pub prediction: Option<RootCausePrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub action: String,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBatch {
    pub events: Vec<SessionEvent>,
    /// No event will follow the last one returned.
    pub done: bool,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown incident '{0}'")]
    UnknownIncident(String),
    #[error("unknown session '{0}'")]
    UnknownSession(String),
    #[error("cannot {action} while the session is {state}")]
    StateMismatch { action: String, state: SessionState },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("session store: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything an episode driver needs, owned.
pub struct PreparedEpisode {
    pub incident: IncidentRecord,
    pub summary: SummarizedIncident,
    pub toolset: Toolset,
    pub config: AgentConfig,
    pub planner: LlmSession,
    pub utility: LlmSession,
    /// Tag written into the trajectory and prediction.
    pub mode_tag: String,
}

/// Turns a session request into a runnable episode.
pub trait EpisodeSource: Send + Sync {
    fn prepare(&self, request: &SessionRequest) -> Result<PreparedEpisode, ServiceError>;
}

/// Sessions over one scenario; the mode names the planner script.
pub struct ScenarioSource {
    pub scenario: Arc<Scenario>,
    pub config: AgentConfig,
}

impl EpisodeSource for ScenarioSource {
    fn prepare(&self, request: &SessionRequest) -> Result<PreparedEpisode, ServiceError> {
        let s = &self.scenario;
        if request.incident_id != s.incident.id {
            return Err(ServiceError::UnknownIncident(request.incident_id.clone()));
        }
        let script = s.script(&request.mode).map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let config = request.config.clone().unwrap_or_else(|| self.config.clone());
        config.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let (toolset, _) = s.toolset(&script.environment, &config).map_err(|e| ServiceError::Invalid(e.to_string()))?;
        Ok(PreparedEpisode {
            incident: s.incident.clone(),
            summary: s.summary(),
            toolset,
            config,
            planner: LlmSession::scripted(script.planner.clone(), ModelRole::Planner),
            utility: LlmSession::scripted(script.utility.clone(), ModelRole::Utility),
            mode_tag: scenario_mode(s),
        })
    }
}

/// Sessions over corpus incidents with the general-purpose toolsets.
pub struct CorpusSource {
    pub corpus: Arc<Corpus>,
    pub retriever: Retriever,
    pub gateway: Gateway,
    pub config: AgentConfig,
    pub with_discussions: bool,
}

impl EpisodeSource for CorpusSource {
    fn prepare(&self, request: &SessionRequest) -> Result<PreparedEpisode, ServiceError> {
        let incident =
            self.corpus.get(&request.incident_id).ok_or_else(|| ServiceError::UnknownIncident(request.incident_id.clone()))?;
        let mode: ReactMode = request.mode.parse().map_err(ServiceError::Invalid)?;
        let config = request.config.clone().unwrap_or_else(|| self.config.clone());
        config.validate().map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let summary = self.corpus.summary_or_raw(&incident.id).map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let toolset =
            react_toolset(mode, self.retriever.clone(), self.corpus.clone(), config.retrieval.k, self.with_discussions);
        Ok(PreparedEpisode {
            incident: incident.clone(),
            summary,
            toolset,
            config,
            planner: self.gateway.session(ModelRole::Planner),
            utility: self.gateway.session(ModelRole::Utility),
            mode_tag: mode.to_string(),
        })
    }
}

struct Inner {
    meta: SessionMeta,
    state: SessionState,
    events: Vec<SessionEvent>,
    pending: Option<Pending>,
    reply: Option<Response>,
    notes: Vec<String>,
    abort: bool,
    log: Option<File>,
}

impl Inner {
    fn push(&mut self, kind: EventKind, payload: String, detail: Option<EpisodeEvent>) {
        let event = SessionEvent {
            seq: self.events.len() as u64 + 1,
            kind,
            payload,
            at: Timestamp::from_datetime(Utc::now()),
            detail,
        };
        if let Some(f) = self.log.as_mut() {
            let line = serde_json::to_string(&event).expect("event serializes");
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                tracing::warn!(session = %self.meta.id, "event log write failed: {e}");
            }
        }
        self.events.push(event);
    }

    fn final_detail(&self) -> Option<(&Terminal, &Option<RootCausePrediction>)> {
        match self.events.last().and_then(|e| e.detail.as_ref()) {
            Some(EpisodeEvent::Finished { terminal, prediction, .. }) => Some((terminal, prediction)),
            _ => None,
        }
    }

    fn view(&self) -> SessionView {
        let fin = self.final_detail();
        SessionView {
            meta: self.meta.clone(),
            state: self.state,
            pending: self.pending.clone(),
            last_seq: self.events.len() as u64,
            terminal: fin.map(|f| *f.0),
            prediction: fin.and_then(|f| f.1.clone()),
        }
    }
}

struct Shared {
    inner: Mutex<Inner>,
    cv: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn append(&self, kind: EventKind, payload: String, detail: Option<EpisodeEvent>) {
        self.lock().push(kind, payload, detail);
        self.cv.notify_all();
    }
}

/// Approval gate, operator notes and abort flag, seen from the agent loop.
struct Gate(Arc<Shared>);

impl Supervisor for Gate {
    fn review(&mut self, step: usize, tool: &str, input: &str) -> Decision {
        let mut g = self.0.lock();
        if g.abort {
            return Decision::Abort;
        }
        g.pending = Some(Pending::Approval { step, tool: tool.into(), input: input.into() });
        g.state = SessionState::AwaitingApproval;
        self.0.cv.notify_all();
        while g.reply.is_none() && !g.abort {
            g = self.0.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        g.pending = None;
        g.state = SessionState::Running;
        match g.reply.take() {
            Some(Response::Approve) => Decision::Approve,
            Some(Response::Deny { reason }) => Decision::Deny(reason),
            Some(Response::Interject { text }) => Decision::Interject(text),
            _ => Decision::Abort,
        }
    }

    fn take_notes(&mut self) -> Vec<String> {
        std::mem::take(&mut self.0.lock().notes)
    }

    fn abort_requested(&mut self) -> bool {
        self.0.lock().abort
    }
}

/// Routes `ask_human` requests to the operator.
struct HumanGate(Arc<Shared>);

impl HumanChannel for HumanGate {
    fn ask(&self, request: &str, timeout: Duration) -> Option<String> {
        self.0.append(
            EventKind::HumanRequest,
            request.to_string(),
            Some(EpisodeEvent::HumanRequest { question: request.to_string() }),
        );
        let deadline = Instant::now() + timeout;
        let answer = {
            let mut g = self.0.lock();
            g.pending = Some(Pending::Human { question: request.to_string() });
            g.state = SessionState::AwaitingHuman;
            self.0.cv.notify_all();
            loop {
                if g.abort {
                    break None;
                }
                if let Some(Response::HumanAnswer { text }) = g.reply.take() {
                    break Some(text);
                }
                let now = Instant::now();
                if now >= deadline {
                    break None;
                }
                g = self.0.cv.wait_timeout(g, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
            }
        };
        {
            let mut g = self.0.lock();
            g.pending = None;
            if !g.state.is_terminal() {
                g.state = SessionState::Running;
            }
        }
        let payload = answer.clone().unwrap_or_else(|| "(no answer)".into());
        self.0.append(EventKind::HumanResponse, payload, Some(EpisodeEvent::HumanResponse { answer: answer.clone() }));
        answer
    }
}

const OPERATOR_ABORT: &str = "aborted by operator";

fn describe(event: &EpisodeEvent) -> Option<(EventKind, String)> {
    Some(match event {
        EpisodeEvent::Started { .. } | EpisodeEvent::HumanRequest { .. } | EpisodeEvent::HumanResponse { .. } => {
            return None
        }
        EpisodeEvent::Thought { text, .. } => (EventKind::Thought, text.clone()),
        EpisodeEvent::ActionProposed { tool, input, .. } => (EventKind::ActionProposed, format!("{tool}: {input}")),
        EpisodeEvent::ActionApproved { step } => (EventKind::ActionApproved, format!("step {step} approved")),
        EpisodeEvent::ActionDenied { reason, .. } => (EventKind::ActionDenied, reason.clone()),
        EpisodeEvent::Observation { text, .. } => (EventKind::Observation, text.clone()),
        EpisodeEvent::Finished { terminal, prediction, abort_reason, .. } => {
            let text = match (terminal, prediction, abort_reason) {
                (Terminal::FinalAnswer, Some(p), _) => p.predicted_root_cause.clone(),
                (Terminal::IterationCap, _, _) => "iteration cap reached without a final answer".into(),
                (_, _, Some(r)) => format!("aborted: {r}"),
                _ => "finished".into(),
            };
            (EventKind::Final, text)
        }
    })
}

/// Writes agent events into the log; the final one also settles the state.
struct Recorder(Arc<Shared>);

impl EpisodeObserver for Recorder {
    fn event(&mut self, event: &EpisodeEvent) {
        let Some((kind, payload)) = describe(event) else { return };
        let mut g = self.0.lock();
        if let EpisodeEvent::Finished { terminal, abort_reason, .. } = event {
            if let Some(r) = abort_reason.as_deref().filter(|r| *r != OPERATOR_ABORT) {
                g.push(EventKind::Error, r.to_string(), None);
            }
            g.push(kind, payload, Some(event.clone()));
            g.pending = None;
            g.state = if *terminal == Terminal::Aborted { SessionState::Aborted } else { SessionState::Finished };
        } else {
            g.push(kind, payload, Some(event.clone()));
        }
        drop(g);
        self.0.cv.notify_all();
    }
}

/// Blocking iterator over a session's events from a given position.
pub struct EventStream {
    shared: Arc<Shared>,
    next: usize,
}

impl Iterator for EventStream {
    type Item = SessionEvent;

    fn next(&mut self) -> Option<SessionEvent> {
        let mut g = self.shared.lock();
        loop {
            if let Some(e) = g.events.get(self.next) {
                self.next += 1;
                return Some(e.clone());
            }
            if g.state.is_terminal() {
                return None;
            }
            g = self.shared.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
    }
}

pub struct SessionManager {
    source: Arc<dyn EpisodeSource>,
    dir: Option<PathBuf>,
    sessions: Mutex<BTreeMap<String, Arc<Shared>>>,
    counter: Mutex<u64>,
}

fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.meta.json"))
}

fn events_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.events.jsonl"))
}

pub fn trajectory_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.trajectory.json"))
}

impl SessionManager {
    /// Sessions live in memory only.
    pub fn in_memory(source: Arc<dyn EpisodeSource>) -> Self {
        Self { source, dir: None, sessions: Mutex::default(), counter: Mutex::new(0) }
    }

    /// Persists sessions under `dir` and reloads earlier ones. Sessions that
    /// were still live when the previous process stopped come back aborted.
    pub fn open(dir: impl Into<PathBuf>, source: Arc<dyn EpisodeSource>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        let mut max_n = 0;
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
            .collect();
        entries.sort();
        for path in entries {
            let meta: SessionMeta = serde_json::from_str(&fs::read_to_string(&path)?)
                .map_err(|e| ServiceError::Invalid(format!("{}: {e}", path.display())))?;
            let mut events = Vec::new();
            if let Ok(f) = File::open(events_path(&dir, &meta.id)) {
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<SessionEvent>(&line) {
                        Ok(e) => events.push(e),
                        Err(e) => {
                            // a torn last line from a crash; keep what came before
                            tracing::warn!(session = %meta.id, line = i + 1, "unreadable event: {e}");
                            break;
                        }
                    }
                }
            }
            if let Some(n) = meta.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                max_n = max_n.max(n);
            }
            let log = OpenOptions::new().create(true).append(true).open(events_path(&dir, &meta.id))?;
            let mut inner = Inner {
                meta,
                state: SessionState::Aborted,
                events,
                pending: None,
                reply: None,
                notes: Vec::new(),
                abort: true,
                log: Some(log),
            };
            match inner.final_detail() {
                Some((Terminal::Aborted, _)) => {}
                Some(_) => inner.state = SessionState::Finished,
                None if inner.events.last().map(|e| e.kind) != Some(EventKind::Error) => {
                    inner.push(EventKind::Error, "service restarted before the session finished".into(), None)
                }
                None => {}
            }
            let id = inner.meta.id.clone();
            sessions.insert(id, Arc::new(Shared { inner: Mutex::new(inner), cv: Condvar::new() }));
        }
        Ok(Self { source, dir: Some(dir), sessions: Mutex::new(sessions), counter: Mutex::new(max_n) })
    }

    fn shared(&self, id: &str) -> Result<Arc<Shared>, ServiceError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    /// Starts an episode on its own thread and returns the session id.
    pub fn create(&self, request: SessionRequest) -> Result<String, ServiceError> {
        let prepared = self.source.prepare(&request)?;
        let id = {
            let mut n = self.counter.lock().unwrap_or_else(|e| e.into_inner());
            *n += 1;
            format!("s{:06}", *n)
        };
        let meta = SessionMeta {
            id: id.clone(),
            incident_id: request.incident_id.clone(),
            mode: request.mode.clone(),
            created_at: Timestamp::from_datetime(Utc::now()),
        };
        let log = match &self.dir {
            Some(dir) => {
                fs::write(meta_path(dir, &id), serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
                Some(OpenOptions::new().create(true).append(true).open(events_path(dir, &id))?)
            }
            None => None,
        };
        let shared = Arc::new(Shared {
            inner: Mutex::new(Inner {
                meta,
                state: SessionState::Running,
                events: Vec::new(),
                pending: None,
                reply: None,
                notes: Vec::new(),
                abort: false,
                log,
            }),
            cv: Condvar::new(),
        });
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), shared.clone());

        let dir = self.dir.clone();
        let sid = id.clone();
        thread::Builder::new().name(format!("episode-{id}")).spawn(move || {
            let PreparedEpisode { incident, summary, toolset, config, mut planner, mut utility, mode_tag } = prepared;
            let human = HumanGate(shared.clone());
            let mut gate = Gate(shared.clone());
            let mut recorder = Recorder(shared.clone());
            let hooks = Hooks { human: &human, supervisor: Some(&mut gate), observer: Some(&mut recorder) };
            let trajectory =
                run_episode(&incident, &summary, &toolset, &config, &mut planner, &mut utility, hooks, &mode_tag);
            if let Some(dir) = dir {
                let path = trajectory_path(&dir, &sid);
                let tmp = path.with_extension("json.tmp");
                if let Err(e) = trajectory.write(&tmp).and_then(|_| fs::rename(&tmp, &path)) {
                    tracing::warn!(session = %sid, "could not write trajectory: {e}");
                }
            }
        })?;
        Ok(id)
    }

    pub fn list(&self) -> Vec<SessionView> {
        let all: Vec<Arc<Shared>> = self.sessions.lock().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        all.iter().map(|s| s.lock().view()).collect()
    }

    pub fn get(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.shared(id)?.lock().view())
    }

    /// Events with `seq > after`, without waiting.
    pub fn events_after(&self, id: &str, after: u64) -> Result<EventBatch, ServiceError> {
        let s = self.shared(id)?;
        let g = s.lock();
        let events: Vec<SessionEvent> = g.events.iter().skip(after as usize).cloned().collect();
        Ok(EventBatch { events, done: g.state.is_terminal() })
    }

    /// Like [`Self::events_after`] but waits up to `timeout` for something new.
    pub fn wait_events(&self, id: &str, after: u64, timeout: Duration) -> Result<EventBatch, ServiceError> {
        let s = self.shared(id)?;
        let deadline = Instant::now() + timeout;
        let mut g = s.lock();
        while g.events.len() as u64 <= after && !g.state.is_terminal() {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            g = s.cv.wait_timeout(g, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
        let events: Vec<SessionEvent> = g.events.iter().skip(after as usize).cloned().collect();
        Ok(EventBatch { events, done: g.state.is_terminal() })
    }

    /// Blocking iterator that ends after the last event of a finished session.
    pub fn stream(&self, id: &str, after: u64) -> Result<EventStream, ServiceError> {
        Ok(EventStream { shared: self.shared(id)?, next: after as usize })
    }

    /// Waits until `pred` holds for the session state or `timeout` passes.
    pub fn wait_for(
        &self,
        id: &str,
        timeout: Duration,
        pred: impl Fn(SessionState) -> bool,
    ) -> Result<SessionView, ServiceError> {
        let s = self.shared(id)?;
        let deadline = Instant::now() + timeout;
        let mut g = s.lock();
        while !pred(g.state) {
            let now = Instant::now();
            if now >= deadline || g.state.is_terminal() {
                break;
            }
            g = s.cv.wait_timeout(g, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
        Ok(g.view())
    }

    pub fn respond(&self, id: &str, response: Response) -> Result<Ack, ServiceError> {
        let s = self.shared(id)?;
        let mut g = s.lock();
        let state = g.state;
        let mismatch = || ServiceError::StateMismatch { action: response.name().to_string(), state };
        match (&response, state) {
            (_, st) if st.is_terminal() => return Err(mismatch()),
            (Response::Abort, _) => g.abort = true,
            (Response::Approve | Response::Deny { .. } | Response::Interject { .. }, SessionState::AwaitingApproval)
            | (Response::HumanAnswer { .. }, SessionState::AwaitingHuman) => {
                g.reply = Some(response.clone());
                g.pending = None;
                g.state = SessionState::Running;
            }
            (Response::Interject { text }, SessionState::Running) => g.notes.push(text.clone()),
            _ => return Err(mismatch()),
        }
        let ack = Ack { session_id: id.to_string(), action: response.name().to_string(), state: g.state };
        drop(g);
        s.cv.notify_all();
        Ok(ack)
    }

    /// Rebuilds the trajectory from the event log; None until finished.
    pub fn trajectory(&self, id: &str) -> Result<Option<Trajectory>, ServiceError> {
        let s = self.shared(id)?;
        let g = s.lock();
        Ok(Trajectory::replay(g.events.iter().filter_map(|e| e.detail.as_ref())))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}
