mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::fixtures::{history, incident};
use proptest::prelude::*;
use rca_core::agent::{
    run_episode, Action, AgentConfig, Decision, EpisodeEvent, Hooks, StepStatus, Supervisor, Terminal, Trajectory, Verdict,
};
use rca_core::corpus::{IncidentRecord, SummarizedIncident};
use rca_core::llm::{LlmSession, ModelRole, Script, ScriptEntry, ScriptFailure};
use rca_core::retrieval::{IndexKind, Retriever};
use rca_core::tools::{
    HistoricalBrTool, HistoricalQaTool, HistoricalSearchTool, InputField, NoHuman, Tool, ToolContext, ToolDescriptor,
    ToolError, Toolset,
};

struct Broken;

impl Tool for Broken {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: "broken".into(),
            description: "always fails".into(),
            input_schema: vec![InputField::new("x", "text", "anything")],
            retrieval_bearing: false,
        }
    }

    fn call(&self, _input: &str, _ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        Err(ToolError::new("cluster address missing"))
    }
}

fn setup() -> (IncidentRecord, SummarizedIncident, Toolset, AgentConfig) {
    let corpus = Arc::new(history());
    let config = AgentConfig::default();
    let retriever = Retriever::build(&corpus, &config.retrieval, IndexKind::Sparse).unwrap();
    let tools = Toolset::new()
        .with(HistoricalBrTool::new(retriever.clone(), corpus.clone(), config.retrieval.k))
        .with(HistoricalSearchTool { retriever, corpus: corpus.clone(), k: config.retrieval.k })
        .with(HistoricalQaTool { corpus, with_discussions: false })
        .with(Broken);
    let inc = incident("NEW-1", "Blob storage errors in region", "Blob write errors after deploy", None);
    let summary = SummarizedIncident::passthrough(&inc);
    (inc, summary, tools, config)
}

fn episode(planner: Script, utility: Script, config: &AgentConfig) -> Trajectory {
    let (inc, summary, tools, _) = setup();
    let mut p = LlmSession::scripted(planner, ModelRole::Planner);
    let mut u = LlmSession::scripted(utility, ModelRole::Utility);
    run_episode(&inc, &summary, &tools, config, &mut p, &mut u, Hooks::new(&NoHuman), "react-br")
}

fn tool_step(tool: &str, input: &str) -> String {
    format!("Thought: look\nAction: {tool}\nAction Input: {input}")
}

#[test]
fn single_final_step() {
    let cfg = AgentConfig::default();
    let t = episode(Script::responses(["Thought: done\nFinal Answer: quota exceeded"]), Script::default(), &cfg);
    assert_eq!(t.steps.len(), 1);
    assert_eq!(t.terminal, Terminal::FinalAnswer);
    let p = t.prediction.as_ref().unwrap();
    assert_eq!(p.predicted_root_cause, "quota exceeded");
    assert_eq!(p.verdict, Verdict::Specific);
    assert!(t.steps[0].observation.is_none());
}

#[test]
fn never_final_hits_cap() {
    let cfg = AgentConfig::default();
    let t = episode(Script::new(vec![ScriptEntry::repeating(tool_step("historical_incidents", "blob"))]), Script::default(), &cfg);
    assert_eq!(t.steps.len(), 20);
    assert_eq!(t.terminal, Terminal::IterationCap);
    assert!(t.prediction.is_none());
    assert!(t.steps.iter().all(|s| s.observation.is_some()));
}

#[test]
fn errors_become_observations() {
    let cfg = AgentConfig::default();
    let t = episode(
        Script::responses([
            tool_step("foo", "x"),
            tool_step("broken", "x"),
            "I think we should look at the logs".to_string(),
            "Thought: enough\nFinal Answer: There is insufficient evidence to name a cause.".to_string(),
        ]),
        Script::default(),
        &cfg,
    );
    assert_eq!(t.terminal, Terminal::FinalAnswer);
    let obs: Vec<&str> = t.steps.iter().filter_map(|s| s.observation.as_deref()).collect();
    assert!(obs[0].starts_with("unknown tool foo; available: "));
    assert!(obs[0].contains("historical_incidents_search"));
    assert!(obs[1].contains("cluster address missing"));
    assert_eq!(t.steps[1].status, StepStatus::ToolError);
    assert_eq!(t.steps[2].status, StepStatus::ParseError);
    assert!(matches!(t.steps[2].action, Action::Unparsed { .. }));
    assert_eq!(t.prediction.unwrap().verdict, Verdict::InsufficientEvidence);
}

#[test]
fn retrieval_budget_and_per_call_limit() {
    let cfg = AgentConfig::default();
    let queries = ["blob", "setting drift", "certificate", "dns timeout", "disk latency", "blob quota", "tenants"];
    let mut lines: Vec<String> = queries.iter().map(|q| tool_step("historical_incidents_search", q)).collect();
    lines.push(tool_step("historical_incidents", "node restart"));
    lines.push("Thought: ok\nFinal Answer: quota".into());
    let t = episode(Script::responses(lines), Script::default(), &cfg);
    assert!(t.retrieved_ids.len() <= 10);
    let unique: BTreeSet<&String> = t.retrieved_ids.iter().collect();
    assert_eq!(unique.len(), t.retrieved_ids.len());
    for s in &t.steps {
        if let Some(obs) = &s.observation {
            let listed = obs.lines().filter(|l| l.starts_with('[')).count();
            assert!(listed <= 3, "{obs}");
        }
    }
    assert_eq!(t.retrieved_ids.len(), 10);
    let last = t.steps.iter().rev().find(|s| s.status == StepStatus::BudgetExhausted).unwrap();
    assert!(last.observation.as_ref().unwrap().starts_with("Retrieval budget exhausted"));
}

#[test]
fn planner_failure_aborts_with_partial_trajectory() {
    let cfg = AgentConfig::default();
    let t = episode(
        Script::new(vec![ScriptEntry::text(tool_step("broken", "x")), ScriptEntry::failure(ScriptFailure::Fatal)]),
        Script::default(),
        &cfg,
    );
    assert_eq!(t.terminal, Terminal::Aborted);
    assert_eq!(t.steps.len(), 1);
    assert!(t.abort_reason.unwrap().contains("planner failed"));
}

#[test]
fn context_overflow_aborts() {
    let (inc, summary, tools, cfg) = setup();
    let p = LlmSession::scripted(Script::default(), ModelRole::Planner);
    let mut settings = *p.settings();
    settings.context_limit = 20;
    let mut p = LlmSession::new(
        Box::new(rca_core::llm::ScriptedBackend::new(Arc::new(Script::responses(["Thought: x\nFinal Answer: y"])))),
        ModelRole::Planner,
        settings,
    );
    let mut u = LlmSession::scripted(Script::default(), ModelRole::Utility);
    let t = run_episode(&inc, &summary, &tools, &cfg, &mut p, &mut u, Hooks::new(&NoHuman), "react-br");
    assert_eq!(t.terminal, Terminal::Aborted);
    assert!(t.steps.is_empty());
    assert!(t.abort_reason.unwrap().contains("context"));
}

#[test]
fn empty_toolset_aborts() {
    let (inc, summary, _, cfg) = setup();
    let mut p = LlmSession::scripted(Script::default(), ModelRole::Planner);
    let mut u = LlmSession::scripted(Script::default(), ModelRole::Utility);
    let t = run_episode(&inc, &summary, &Toolset::new(), &cfg, &mut p, &mut u, Hooks::new(&NoHuman), "react-br");
    assert_eq!(t.terminal, Terminal::Aborted);
    assert_eq!(p.calls(), 0);
}

struct Gate {
    decisions: Vec<Decision>,
    notes: Vec<String>,
}

impl Supervisor for Gate {
    fn review(&mut self, _step: usize, _tool: &str, _input: &str) -> Decision {
        if self.decisions.is_empty() {
            Decision::Approve
        } else {
            self.decisions.remove(0)
        }
    }

    fn take_notes(&mut self) -> Vec<String> {
        std::mem::take(&mut self.notes)
    }
}

#[test]
fn supervision_and_replay() {
    let (inc, summary, tools, mut cfg) = setup();
    cfg.approval_required = true;
    let mut p = LlmSession::scripted(
        Script::responses([
            tool_step("historical_incidents", "blob"),
            tool_step("historical_incidents", "blob"),
            tool_step("historical_incidents", "blob"),
            "Thought: ok\nFinal Answer: storage quota exceeded".into(),
        ]),
        ModelRole::Planner,
    );
    let mut u = LlmSession::scripted(Script::default(), ModelRole::Utility);
    let mut gate = Gate {
        decisions: vec![Decision::Deny("use the search tool".into()), Decision::Interject("check quotas first".into())],
        notes: vec!["region is west".into()],
    };
    let mut events = Vec::new();
    let mut observer = |e: &EpisodeEvent| events.push(e.clone());
    let hooks = Hooks { human: &NoHuman, supervisor: Some(&mut gate), observer: Some(&mut observer) };
    let t = run_episode(&inc, &summary, &tools, &cfg, &mut p, &mut u, hooks, "react-br");
    assert_eq!(t.steps[0].observation.as_deref(), Some("use the search tool\nOperator note: region is west"));
    assert_eq!(t.steps[0].status, StepStatus::Denied);
    assert_eq!(t.steps[1].observation.as_deref(), Some("check quotas first"));
    assert_eq!(t.steps[2].status, StepStatus::Ok);
    assert_eq!(t.terminal, Terminal::FinalAnswer);
    assert!(events.iter().any(|e| matches!(e, EpisodeEvent::ActionApproved { step: 3 })));
    assert_eq!(Trajectory::replay(&events).unwrap(), t);
    assert_eq!(Trajectory::from_json(&t.to_json()).unwrap(), t);
}

#[test]
fn operator_abort() {
    let (inc, summary, tools, mut cfg) = setup();
    cfg.approval_required = true;
    let mut p = LlmSession::scripted(Script::responses([tool_step("broken", "x")]), ModelRole::Planner);
    let mut u = LlmSession::scripted(Script::default(), ModelRole::Utility);
    let mut gate = Gate { decisions: vec![Decision::Abort], notes: vec![] };
    let hooks = Hooks { human: &NoHuman, supervisor: Some(&mut gate), observer: None };
    let t = run_episode(&inc, &summary, &tools, &cfg, &mut p, &mut u, hooks, "react-br");
    assert_eq!(t.terminal, Terminal::Aborted);
    assert!(t.steps.is_empty());
}

fn arbitrary_line() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(tool_step("historical_incidents", "blob error")),
        Just(tool_step("historical_incidents_search", "setting drift")),
        Just(tool_step("historical_incidents_qa", "what was the root cause?")),
        Just(tool_step("broken", "x")),
        Just(tool_step("nope", "x")),
        Just("Thought: done\nFinal Answer: quota".to_string()),
        "[a-zA-Z :\n]{0,40}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn episode_invariants(lines in proptest::collection::vec(arbitrary_line(), 0..30), cap in 1usize..25) {
        let cfg = AgentConfig { max_iterations: cap, ..AgentConfig::default() };
        let utility = Script::new(vec![ScriptEntry::repeating("The root cause was a quota.")]);
        let t = episode(Script::responses(lines.clone()), utility.clone(), &cfg);
        prop_assert!(t.steps.len() <= cap);
        prop_assert_eq!(t.steps.len() == cap && t.terminal != Terminal::FinalAnswer, t.terminal == Terminal::IterationCap);
        prop_assert_eq!(t.terminal == Terminal::FinalAnswer, t.prediction.is_some());
        prop_assert!(t.retrieved_ids.len() <= 10);
        for (i, s) in t.steps.iter().enumerate() {
            prop_assert_eq!(s.index, i + 1);
            prop_assert_eq!(s.observation.is_none(), matches!(s.action, Action::Final { .. }));
        }
        let again = episode(Script::responses(lines), utility, &cfg);
        prop_assert_eq!(t.to_json(), again.to_json());
    }
}
