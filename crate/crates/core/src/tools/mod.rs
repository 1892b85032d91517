//! Tools the planner can call, and the per-episode context they run in.
//!
//! A tool never aborts an episode: failures come back as [`ToolError`] and
//! the agent loop turns them into observations.

mod casestudy;
mod general;
pub mod kba;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{IncidentRecord, SummarizedIncident};
use crate::llm::LlmSession;
use crate::retrieval::RetrievalHit;
use crate::table::DataTable;

pub use casestudy::{AskHumanTool, DatabaseAdapter, DbQueryTool, KbaPlanTool, KbaQaTool, KbaSource, TablePlan, TableQaTool};
pub use general::{react_toolset, HistoricalBrTool, HistoricalQaTool, HistoricalSearchTool, IncidentDetailsTool, ReactMode};
pub use kba::{KbaDocument, KbaError, KbaStore};

pub const INCIDENT_DETAILS: &str = "incident_details";
pub const HISTORICAL_INCIDENTS: &str = "historical_incidents";
pub const HISTORICAL_SEARCH: &str = "historical_incidents_search";
pub const HISTORICAL_QA: &str = "historical_incidents_qa";
pub const DB_QUERY: &str = "db_query";
pub const TABLE_QA: &str = "table_qa";
pub const KBA_QA: &str = "kba_qa";
pub const KBA_PLAN: &str = "kba_plan";
pub const ASK_HUMAN: &str = "ask_human";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputField {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub description: String,
}

impl InputField {
    pub fn new(name: &str, ty: &str, description: &str) -> Self {
        Self { name: name.into(), ty: ty.into(), description: description.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema: Vec<InputField>,
    /// Calls count against the episode's retrieval budget.
    pub retrieval_bearing: bool,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ToolError(pub String);

impl ToolError {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }
}

impl From<crate::llm::LlmError> for ToolError {
    fn from(e: crate::llm::LlmError) -> Self {
        ToolError(format!("tool model call failed: {e}"))
    }
}

/// Unique documents admitted during one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalBudget {
    total: usize,
    seen: Vec<String>,
    dedup: bool,
}

impl RetrievalBudget {
    pub fn new(total: usize) -> Self {
        Self { total, seen: Vec::new(), dedup: false }
    }

    /// Also hide documents returned by earlier calls.
    pub fn with_dedup(mut self, dedup: bool) -> Self {
        self.dedup = dedup;
        self
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn used(&self) -> usize {
        self.seen.len()
    }

    pub fn remaining(&self) -> usize {
        self.total - self.seen.len()
    }

    pub fn exhausted(&self) -> bool {
        self.seen.len() >= self.total
    }

    /// Admitted ids in first-seen order.
    pub fn ids(&self) -> &[String] {
        &self.seen
    }

    /// Filters one call's hits: previously seen documents pass through (unless
    /// dedup is on), new ones are admitted while capacity remains. Returns
    /// the kept hits and how many were dropped for lack of budget.
    pub fn admit(&mut self, hits: Vec<RetrievalHit>) -> (Vec<RetrievalHit>, usize) {
        let mut kept = Vec::new();
        let mut dropped = 0;
        for hit in hits {
            if self.seen.contains(&hit.doc_id) {
                if !self.dedup {
                    kept.push(hit);
                }
            } else if self.seen.len() < self.total {
                self.seen.push(hit.doc_id.clone());
                kept.push(hit);
            } else {
                dropped += 1;
            }
        }
        (kept, dropped)
    }
}

/// A materialized query result the planner can refer to by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHandle {
    pub id: String,
    pub columns: Vec<String>,
    pub row_count: usize,
    pub cluster: String,
    pub database: String,
    pub query: String,
}

/// Session-scoped tool state.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    /// Ids found by the last historical search; `None` before any search.
    pub search_ids: Option<Vec<String>>,
    pub tables: BTreeMap<String, (TableHandle, DataTable)>,
    pub last_table: Option<String>,
}

impl Scratch {
    pub fn store_table(&mut self, cluster: &str, database: &str, query: &str, table: DataTable) -> TableHandle {
        let id = format!("t{}", self.tables.len() + 1);
        let handle = TableHandle {
            id: id.clone(),
            columns: table.column_names().iter().map(|c| c.to_string()).collect(),
            row_count: table.rows.len(),
            cluster: cluster.into(),
            database: database.into(),
            query: query.into(),
        };
        self.tables.insert(id.clone(), (handle.clone(), table));
        self.last_table = Some(id);
        handle
    }
}

/// Source of answers for the human interaction tool.
pub trait HumanChannel: Send + Sync {
    /// Blocks until an answer arrives or `timeout` passes.
    fn ask(&self, request: &str, timeout: Duration) -> Option<String>;
}

/// Nobody is listening; every request times out at once.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoHuman;

impl HumanChannel for NoHuman {
    fn ask(&self, _request: &str, _timeout: Duration) -> Option<String> {
        None
    }
}

/// Scripted responder: the first unused rule whose needle occurs in the
/// request answers it. Rules without a needle match anything.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedHuman {
    pub rules: Vec<HumanRule>,
    #[serde(skip)]
    used: Arc<Mutex<BTreeSet<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanRule {
    #[serde(default)]
    pub when_contains: Option<String>,
    pub answer: String,
}

impl ScriptedHuman {
    pub fn new(rules: Vec<HumanRule>) -> Self {
        Self { rules, used: Arc::default() }
    }

    pub fn answers<I: IntoIterator<Item = S>, S: Into<String>>(answers: I) -> Self {
        Self::new(answers.into_iter().map(|a| HumanRule { when_contains: None, answer: a.into() }).collect())
    }
}

impl HumanChannel for ScriptedHuman {
    fn ask(&self, request: &str, _timeout: Duration) -> Option<String> {
        let mut used = self.used.lock().expect("responder lock");
        let (i, rule) = self.rules.iter().enumerate().find(|(i, r)| {
            !used.contains(i) && r.when_contains.as_deref().is_none_or(|n| request.contains(n))
        })?;
        used.insert(i);
        Some(rule.answer.clone())
    }
}

/// Everything a tool may touch during one call.
pub struct ToolContext<'a> {
    pub incident: &'a IncidentRecord,
    pub summary: &'a SummarizedIncident,
    pub utility: &'a mut LlmSession,
    pub budget: &'a mut RetrievalBudget,
    pub scratch: &'a mut Scratch,
    pub human: &'a dyn HumanChannel,
    pub human_timeout: Duration,
}

pub trait Tool: Send + Sync {
    fn descriptor(&self) -> ToolDescriptor;
    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError>;
}

/// Ordered set of tools with unique names.
#[derive(Clone, Default)]
pub struct Toolset {
    tools: Vec<Arc<dyn Tool>>,
}

impl fmt::Debug for Toolset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl Toolset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tool: Arc<dyn Tool>) -> Result<(), ToolError> {
        let name = tool.descriptor().name;
        if self.get(&name).is_some() {
            return Err(ToolError(format!("tool {name} registered twice")));
        }
        self.tools.push(tool);
        Ok(())
    }

    pub fn with(mut self, tool: impl Tool + 'static) -> Self {
        self.register(Arc::new(tool)).expect("unique tool names");
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Tool>> {
        self.tools.iter().find(|t| t.descriptor().name == name)
    }

    pub fn descriptors(&self) -> Vec<ToolDescriptor> {
        self.tools.iter().map(|t| t.descriptor()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.tools.iter().map(|t| t.descriptor().name).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

/// Reads a tool input into named fields. Accepts a JSON object, `key: value`
/// lines, or (for single-field tools) the raw text.
pub fn parse_fields(input: &str, fields: &[&str]) -> Result<BTreeMap<String, String>, ToolError> {
    let input = input.trim();
    let expected = || ToolError(format!("expected input with fields {}", fields.join(", ")));
    let mut out = BTreeMap::new();
    if input.starts_with('{') {
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(input).map_err(|e| ToolError(format!("invalid JSON input: {e}")))?;
        for (k, v) in obj {
            let text = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            out.insert(k, text);
        }
    } else {
        for line in input.lines() {
            if let Some((k, v)) = line.split_once(':') {
                let key = k.trim().to_lowercase();
                if fields.contains(&key.as_str()) {
                    out.insert(key, v.trim().to_string());
                }
            }
        }
        if out.is_empty() {
            if fields.len() == 1 {
                out.insert(fields[0].to_string(), input.to_string());
            } else {
                return Err(expected());
            }
        }
    }
    Ok(out)
}

/// Required field from [`parse_fields`] output.
pub fn field<'m>(map: &'m BTreeMap<String, String>, name: &str) -> Result<&'m str, ToolError> {
    map.get(name).map(String::as_str).ok_or_else(|| ToolError(format!("missing input field '{name}'")))
}
