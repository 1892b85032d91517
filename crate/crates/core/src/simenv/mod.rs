//! Deterministic diagnostic environment: scenario files, a toy database,
//! outcome judging and scripted runs.

pub mod query;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_episode, AgentConfig, Hooks, StepStatus, Trajectory};
use crate::corpus::{Corpus, IncidentRecord, SummarizedIncident};
use crate::llm::{LlmSession, ModelRole, Script};
use crate::retrieval::{EmbedderConfig, IndexKind, Retriever};
use crate::table::{Column, DataTable, Value};
use crate::tools::{
    field, parse_fields, AskHumanTool, DatabaseAdapter, DbQueryTool, HistoricalBrTool, HumanRule, IncidentDetailsTool,
    KbaDocument, KbaPlanTool, KbaQaTool, KbaStore, ScriptedHuman, TableQaTool, Toolset,
};

pub use query::{parse_query, Query, QueryError};

const SETTING_DRIFT: &str = include_str!("../../scenarios/setting-drift.toml");
const MULTI_KBA: &str = include_str!("../../scenarios/multi-kba.toml");

/// Scenario files compiled into the library, as (file name, text).
pub fn shipped() -> [(&'static str, &'static str); 2] {
    [("setting-drift.toml", SETTING_DRIFT), ("multi-kba.toml", MULTI_KBA)]
}

/// Loads a shipped scenario by id.
pub fn shipped_scenario(id: &str) -> Option<Scenario> {
    shipped()
        .into_iter()
        .map(|(name, text)| parse_scenario(text, name).expect("shipped scenario is valid"))
        .find(|s| s.id == id)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}: {path}: {reason}")]
    Invalid { origin: String, path: String, reason: String },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("unknown script '{name}'; available: {available}")]
    UnknownScript { name: String, available: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTable {
    pub cluster: String,
    pub database: String,
    pub name: String,
    pub columns: Vec<Column>,
    #[serde(default)]
    pub rows: Vec<Vec<Value>>,
}

/// A tool call the trajectory must contain for an outcome to match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallRule {
    pub tool: String,
    /// For database queries: the queried table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_contains: Option<String>,
}

impl CallRule {
    fn describe(&self) -> String {
        let mut s = format!("successful {} call", self.tool);
        if let Some(t) = &self.table {
            s.push_str(&format!(" on table '{t}'"));
        }
        if let Some(c) = &self.input_contains {
            s.push_str(&format!(" with input containing '{c}'"));
        }
        s
    }

    fn matches(&self, tool: &str, input: &str, status: StepStatus) -> bool {
        if tool != self.tool || status != StepStatus::Ok {
            return false;
        }
        if let Some(c) = &self.input_contains {
            if !input.to_lowercase().contains(&c.to_lowercase()) {
                return false;
            }
        }
        match &self.table {
            None => true,
            Some(t) => queried_table(input).is_some_and(|q| q.eq_ignore_ascii_case(t)),
        }
    }
}

fn queried_table(input: &str) -> Option<String> {
    let fields = parse_fields(input, &["cluster", "database", "query"]).ok()?;
    parse_query(field(&fields, "query").ok()?).ok().map(|q| q.table)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub required_phrases: Vec<String>,
    #[serde(default)]
    pub forbidden_phrases: Vec<String>,
    #[serde(default)]
    pub required_calls: Vec<CallRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default)]
    pub description: String,
    pub environment: String,
    #[serde(default)]
    pub planner: Script,
    #[serde(default)]
    pub utility: Script,
    #[serde(default)]
    pub human: Vec<HumanRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub incident: IncidentRecord,
    #[serde(default)]
    pub pinned_kba: Option<String>,
    #[serde(default)]
    pub kbas: Vec<KbaDocument>,
    /// Past incidents searchable through the historical tool.
    #[serde(default)]
    pub history: Vec<IncidentRecord>,
    /// Named database states; each script runs against one of them.
    pub environments: BTreeMap<String, Vec<SimTable>>,
    pub outcomes: Vec<Outcome>,
    #[serde(default)]
    pub scripts: BTreeMap<String, ScenarioScript>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, &path.display().to_string())
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text)
        .map_err(|e| ScenarioError::Syntax { origin: origin.into(), message: e.to_string().trim_end().to_string() })?;
    scenario
        .validate()
        .map_err(|(path, reason)| ScenarioError::Invalid { origin: origin.into(), path, reason })?;
    Ok(scenario)
}

impl Scenario {
    /// Cross-reference checks; errors carry a field path and a reason.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |p: String, r: String| Err((p, r));
        if self.id.trim().is_empty() {
            return err("id".into(), "empty scenario id".into());
        }
        self.incident.validate().map_err(|r| ("incident".to_string(), r))?;
        let mut kba_ids = BTreeSet::new();
        for (i, k) in self.kbas.iter().enumerate() {
            k.validate().map_err(|e| (format!("kbas[{i}]"), e.to_string()))?;
            if !kba_ids.insert(k.id.as_str()) {
                return err(format!("kbas[{i}].id"), format!("duplicate KBA id '{}'", k.id));
            }
        }
        if let Some(p) = &self.pinned_kba {
            if !kba_ids.contains(p.as_str()) {
                return err("pinned_kba".into(), format!("unknown KBA '{p}'"));
            }
        }
        let mut history_ids = BTreeSet::new();
        for (i, h) in self.history.iter().enumerate() {
            h.validate().map_err(|r| (format!("history[{i}]"), r))?;
            if !history_ids.insert(h.id.as_str()) {
                return err(format!("history[{i}].id"), format!("duplicate incident id '{}'", h.id));
            }
        }
        if self.environments.is_empty() {
            return err("environments".into(), "at least one environment is required".into());
        }
        let mut tables = BTreeSet::new();
        for (env, list) in &self.environments {
            let mut seen = BTreeSet::new();
            for (i, t) in list.iter().enumerate() {
                let path = format!("environments.{env}[{i}]");
                if !seen.insert((&t.cluster, &t.database, &t.name)) {
                    return err(path, format!("duplicate table '{}' in {}/{}", t.name, t.cluster, t.database));
                }
                DataTable::new(t.columns.clone(), t.rows.clone()).map_err(|e| (path, e.to_string()))?;
                tables.insert(t.name.as_str());
            }
        }
        if self.outcomes.is_empty() {
            return err("outcomes".into(), "at least one outcome is required".into());
        }
        let mut outcome_ids = BTreeSet::new();
        for (i, o) in self.outcomes.iter().enumerate() {
            if !outcome_ids.insert(o.id.as_str()) {
                return err(format!("outcomes[{i}].id"), format!("duplicate outcome id '{}'", o.id));
            }
            if o.required_phrases.is_empty() && o.required_calls.is_empty() {
                return err(format!("outcomes[{i}]"), "outcome has no match rules".into());
            }
            for (j, c) in o.required_calls.iter().enumerate() {
                if let Some(t) = &c.table {
                    if !tables.contains(t.as_str()) {
                        return err(format!("outcomes[{i}].required_calls[{j}].table"), format!("unknown table '{t}'"));
                    }
                }
            }
        }
        for (name, s) in &self.scripts {
            if !self.environments.contains_key(&s.environment) {
                return err(format!("scripts.{name}.environment"), format!("unknown environment '{}'", s.environment));
            }
        }
        Ok(())
    }

    pub fn outcome(&self, id: &str) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.id == id)
    }

    pub fn script(&self, name: &str) -> Result<&ScenarioScript, ScenarioError> {
        self.scripts.get(name).ok_or_else(|| ScenarioError::UnknownScript {
            name: name.into(),
            available: self.scripts.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn database(&self, environment: &str) -> Option<SimDatabase> {
        self.environments.get(environment).map(|tables| SimDatabase::new(tables))
    }

    pub fn summary(&self) -> SummarizedIncident {
        SummarizedIncident::passthrough(&self.incident)
    }

    pub fn pinned(&self) -> Option<&KbaDocument> {
        self.pinned_kba.as_ref().and_then(|id| self.kbas.iter().find(|k| &k.id == id))
    }

    /// Tools wired to one environment. The KBA store is returned so callers
    /// can inspect its retrieval counter.
    pub fn toolset(&self, environment: &str, config: &AgentConfig) -> Result<(Toolset, Arc<KbaStore>), ScenarioError> {
        let db = self.database(environment).ok_or_else(|| ScenarioError::Invalid {
            origin: self.id.clone(),
            path: "environment".into(),
            reason: format!("unknown environment '{environment}'"),
        })?;
        let embedder = EmbedderConfig::default().build();
        let store = if self.pinned().is_some() {
            KbaStore::empty(embedder)
        } else {
            KbaStore::build(self.kbas.clone(), embedder, 120, 20).map_err(|e| ScenarioError::Io(e.to_string()))?
        };
        let store = Arc::new(store);
        let pinned = self.pinned().cloned();
        let mut tools = Toolset::new().with(IncidentDetailsTool::default());
        if !self.history.is_empty() {
            let corpus = Arc::new(Corpus::from_records(self.history.clone()).map_err(|e| ScenarioError::Io(e.to_string()))?);
            let retriever = Retriever::build(&corpus, &config.retrieval, IndexKind::Sparse)
                .map_err(|e| ScenarioError::Io(e.to_string()))?;
            tools = tools.with(HistoricalBrTool::new(retriever, corpus, config.retrieval.k));
        }
        let mut db_tool = DbQueryTool::new(Arc::new(db));
        db_tool.syntax_hint = QUERY_SYNTAX.into();
        let tools = tools
            .with(KbaPlanTool::new(store.clone(), pinned.clone()))
            .with(KbaQaTool::new(store.clone(), pinned))
            .with(db_tool)
            .with(TableQaTool)
            .with(AskHumanTool);
        Ok((tools, store))
    }
}

pub const QUERY_SYNTAX: &str =
    "Query syntax: SELECT <* | col, ...> FROM <table> [WHERE <col> <op> <literal> [AND ...]] [COUNT].";

/// In-memory tables addressed by cluster, database and table name.
#[derive(Debug, Clone)]
pub struct SimDatabase {
    tables: Vec<SimTable>,
}

impl SimDatabase {
    pub fn new(tables: &[SimTable]) -> Self {
        Self { tables: tables.to_vec() }
    }

    pub fn execute(&self, cluster: &str, database: &str, src: &str) -> Result<DataTable, QueryError> {
        if !self.tables.iter().any(|t| t.cluster == cluster) {
            return Err(QueryError(format!("unknown cluster '{cluster}'")));
        }
        let in_db: Vec<&SimTable> = self.tables.iter().filter(|t| t.cluster == cluster && t.database == database).collect();
        if in_db.is_empty() {
            return Err(QueryError(format!("unknown database '{database}' on cluster '{cluster}'")));
        }
        let query = parse_query(src)?;
        let table = in_db
            .iter()
            .find(|t| t.name == query.table)
            .ok_or_else(|| QueryError(format!("unknown table '{}'", query.table)))?;
        let data = DataTable::new(table.columns.clone(), table.rows.clone()).map_err(|e| QueryError(e.to_string()))?;
        query.execute(&data)
    }
}

impl DatabaseAdapter for SimDatabase {
    fn query(&self, cluster: &str, database: &str, query: &str) -> Result<DataTable, String> {
        self.execute(cluster, database, query).map_err(|e| e.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCheck {
    pub id: String,
    pub matched: bool,
    pub rules: Vec<RuleCheck>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    /// First outcome whose rules all pass.
    pub matched: Option<String>,
    pub outcomes: Vec<OutcomeCheck>,
}

/// Checks each outcome's phrase rules against the final answer and its call
/// rules against the trajectory. Without a non-empty answer nothing matches.
pub fn judge_outcome(scenario: &Scenario, trajectory: &Trajectory) -> Judgment {
    let answer = trajectory.final_answer().unwrap_or("").to_lowercase();
    let calls: Vec<_> = trajectory.tool_calls().collect();
    let outcomes: Vec<OutcomeCheck> = scenario
        .outcomes
        .iter()
        .map(|o| {
            let mut rules = vec![RuleCheck { rule: "non-empty final answer".into(), passed: !answer.trim().is_empty() }];
            for p in &o.required_phrases {
                rules.push(RuleCheck { rule: format!("answer mentions '{p}'"), passed: answer.contains(&p.to_lowercase()) });
            }
            for p in &o.forbidden_phrases {
                rules.push(RuleCheck {
                    rule: format!("answer does not mention '{p}'"),
                    passed: !answer.contains(&p.to_lowercase()),
                });
            }
            for c in &o.required_calls {
                let passed = calls.iter().any(|(tool, input, status)| c.matches(tool, input, *status));
                rules.push(RuleCheck { rule: c.describe(), passed });
            }
            OutcomeCheck { id: o.id.clone(), matched: rules.iter().all(|r| r.passed), rules }
        })
        .collect();
    Judgment { matched: outcomes.iter().find(|o| o.matched).map(|o| o.id.clone()), outcomes }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trajectory: Trajectory,
    pub judgment: Judgment,
    pub planner_calls: usize,
    /// Searches against the KBA store; zero when a KBA is pinned.
    pub kba_retrievals: usize,
}

pub fn scenario_mode(scenario: &Scenario) -> String {
    format!("scenario:{}", scenario.id)
}

/// Runs a named script end to end with scripted planner, tool model and human.
pub fn run_script(scenario: &Scenario, script: &str, config: &AgentConfig) -> Result<ScenarioRun, ScenarioError> {
    let s = scenario.script(script)?;
    let (tools, store) = scenario.toolset(&s.environment, config)?;
    let mut planner = LlmSession::scripted(s.planner.clone(), ModelRole::Planner);
    let mut utility = LlmSession::scripted(s.utility.clone(), ModelRole::Utility);
    let human = ScriptedHuman::new(s.human.clone());
    let summary = scenario.summary();
    let trajectory = run_episode(
        &scenario.incident,
        &summary,
        &tools,
        config,
        &mut planner,
        &mut utility,
        Hooks::new(&human),
        &scenario_mode(scenario),
    );
    let judgment = judge_outcome(scenario, &trajectory);
    Ok(ScenarioRun { trajectory, judgment, planner_calls: planner.calls(), kba_retrievals: store.retrieval_calls() })
}

/// True when some required phrase of one outcome is forbidden by the other,
/// so no answer can satisfy both.
pub fn mutually_exclusive(a: &Outcome, b: &Outcome) -> bool {
    let clash = |x: &Outcome, y: &Outcome| {
        x.required_phrases
            .iter()
            .any(|p| y.forbidden_phrases.iter().any(|f| p.to_lowercase().contains(&f.to_lowercase())))
    };
    clash(a, b) || clash(b, a)
}
