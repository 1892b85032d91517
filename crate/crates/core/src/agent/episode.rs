use serde::{Deserialize, Serialize};

use crate::corpus::{IncidentRecord, SummarizedIncident};
use crate::digest::config_hash;
use crate::llm::LlmSession;
use crate::tools::{HumanChannel, RetrievalBudget, Scratch, ToolContext, Toolset};

use super::parse::{parse_step, ParsedStep};
use super::prompt::{render_prompt, FORMAT_REMINDER};
use super::trajectory::{Action, AgentStep, StepStatus, Terminal, Trajectory};
use super::{classify_answer, AgentConfig, RootCausePrediction};

/// Operator decision on a proposed tool call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Approve,
    /// Skip the call; the reason becomes the observation.
    Deny(String),
    /// Skip the call; the operator's text becomes the observation.
    Interject(String),
    Abort,
}

/// Human in the loop around the planner.
pub trait Supervisor {
    /// Consulted before each tool call when approval is required.
    fn review(&mut self, step: usize, tool: &str, input: &str) -> Decision;

    /// Free-form operator notes queued since the last step.
    fn take_notes(&mut self) -> Vec<String> {
        Vec::new()
    }

    fn abort_requested(&mut self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeEvent {
    Started {
        incident_id: String,
        mode: String,
    },
    Thought {
        step: usize,
        text: String,
    },
    ActionProposed {
        step: usize,
        tool: String,
        input: String,
    },
    ActionApproved {
        step: usize,
    },
    ActionDenied {
        step: usize,
        reason: String,
    },
    HumanRequest {
        question: String,
    },
    HumanResponse {
        answer: Option<String>,
    },
    Observation {
        step: usize,
        text: String,
        record: AgentStep,
    },
    Finished {
        incident_id: String,
        mode: String,
        config_hash: String,
        final_step: Option<AgentStep>,
        terminal: Terminal,
        prediction: Option<RootCausePrediction>,
        retrieved_ids: Vec<String>,
        abort_reason: Option<String>,
    },
}

pub trait EpisodeObserver {
    fn event(&mut self, event: &EpisodeEvent);
}

impl<F: FnMut(&EpisodeEvent)> EpisodeObserver for F {
    fn event(&mut self, event: &EpisodeEvent) {
        self(event)
    }
}

pub struct Hooks<'a> {
    pub human: &'a dyn HumanChannel,
    pub supervisor: Option<&'a mut dyn Supervisor>,
    pub observer: Option<&'a mut dyn EpisodeObserver>,
}

impl<'a> Hooks<'a> {
    pub fn new(human: &'a dyn HumanChannel) -> Self {
        Self { human, supervisor: None, observer: None }
    }

    fn emit(&mut self, event: EpisodeEvent) {
        if let Some(o) = self.observer.as_deref_mut() {
            o.event(&event);
        }
    }
}

struct Run<'h, 'a> {
    hooks: &'h mut Hooks<'a>,
    steps: Vec<AgentStep>,
}

impl Run<'_, '_> {
    fn record(&mut self, step: AgentStep) {
        let text = step.observation.clone().unwrap_or_default();
        self.hooks.emit(EpisodeEvent::Observation { step: step.index, text, record: step.clone() });
        self.steps.push(step);
    }
}

/// Runs one ReAct episode to a final answer, the iteration cap or an abort.
///
/// `mode` names the toolset variant and doubles as the prediction's model tag.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    incident: &IncidentRecord,
    summary: &SummarizedIncident,
    toolset: &Toolset,
    config: &AgentConfig,
    planner: &mut LlmSession,
    utility: &mut LlmSession,
    mut hooks: Hooks<'_>,
    mode: &str,
) -> Trajectory {
    let hash = config_hash(config);
    let mut budget = RetrievalBudget::new(config.retrieval.total_budget).with_dedup(config.dedup_retrieval);
    let mut scratch = Scratch::default();
    let descriptors = toolset.descriptors();
    let human = hooks.human;
    hooks.emit(EpisodeEvent::Started { incident_id: incident.id.clone(), mode: mode.to_string() });
    let mut run = Run { hooks: &mut hooks, steps: Vec::new() };

    let mut terminal = Terminal::IterationCap;
    let mut abort_reason = None;
    let mut final_step = None;
    let mut prediction = None;

    if toolset.is_empty() {
        terminal = Terminal::Aborted;
        abort_reason = Some("toolset is empty".to_string());
    }
    let limit = if toolset.is_empty() { 0 } else { config.max_iterations };

    for index in 1..=limit {
        if run.hooks.supervisor.as_deref_mut().is_some_and(|s| s.abort_requested()) {
            terminal = Terminal::Aborted;
            abort_reason = Some("aborted by operator".into());
            break;
        }
        let request = render_prompt(summary, &run.steps, &descriptors, &config.grammar, planner);
        let completion = match planner.complete(&request) {
            Ok(text) => text,
            Err(e) => {
                terminal = Terminal::Aborted;
                abort_reason = Some(format!("planner failed: {e}"));
                break;
            }
        };
        let Some(parsed) = parse_step(&completion, &config.grammar) else {
            let step = AgentStep {
                index,
                thought: String::new(),
                action: Action::Unparsed { raw: completion.trim().to_string() },
                observation: Some(FORMAT_REMINDER.to_string()),
                status: StepStatus::ParseError,
            };
            run.record(step);
            continue;
        };
        match parsed {
            ParsedStep::Final { thought, answer } => {
                run.hooks.emit(EpisodeEvent::Thought { step: index, text: thought.clone() });
                let (text, verdict) = classify_answer(&answer, &config.insufficient_phrases);
                prediction = Some(RootCausePrediction {
                    incident_id: incident.id.clone(),
                    predicted_root_cause: text,
                    verdict,
                    model_tag: mode.to_string(),
                    reasoning: (!thought.is_empty()).then(|| thought.clone()),
                });
                final_step = Some(AgentStep {
                    index,
                    thought,
                    action: Action::Final { answer },
                    observation: None,
                    status: StepStatus::Final,
                });
                terminal = Terminal::FinalAnswer;
                break;
            }
            ParsedStep::Tool { thought, name, input } => {
                run.hooks.emit(EpisodeEvent::Thought { step: index, text: thought.clone() });
                run.hooks.emit(EpisodeEvent::ActionProposed { step: index, tool: name.clone(), input: input.clone() });
                let (mut observation, status) = match toolset.get(&name) {
                    None => (
                        format!("unknown tool {name}; available: {}", toolset.names().join(", ")),
                        StepStatus::UnknownTool,
                    ),
                    Some(tool) => {
                        let decision = match run.hooks.supervisor.as_deref_mut() {
                            Some(s) if config.approval_required => s.review(index, &name, &input),
                            _ => Decision::Approve,
                        };
                        match decision {
                            Decision::Abort => {
                                terminal = Terminal::Aborted;
                                abort_reason = Some("aborted by operator".into());
                                break;
                            }
                            Decision::Deny(reason) => {
                                run.hooks.emit(EpisodeEvent::ActionDenied { step: index, reason: reason.clone() });
                                (reason, StepStatus::Denied)
                            }
                            Decision::Interject(text) => {
                                run.hooks.emit(EpisodeEvent::ActionDenied { step: index, reason: text.clone() });
                                (text, StepStatus::Interjected)
                            }
                            Decision::Approve => {
                                if config.approval_required {
                                    run.hooks.emit(EpisodeEvent::ActionApproved { step: index });
                                }
                                if tool.descriptor().retrieval_bearing && budget.exhausted() {
                                    (
                                        format!(
                                            "Retrieval budget exhausted: all {} historical incidents allowed for this \
                                             investigation have been retrieved. Work with what you have or give a final answer.",
                                            budget.total()
                                        ),
                                        StepStatus::BudgetExhausted,
                                    )
                                } else {
                                    let mut ctx = ToolContext {
                                        incident,
                                        summary,
                                        utility: &mut *utility,
                                        budget: &mut budget,
                                        scratch: &mut scratch,
                                        human,
                                        human_timeout: config.human_timeout(),
                                    };
                                    match tool.call(&input, &mut ctx) {
                                        Ok(out) => (out, StepStatus::Ok),
                                        Err(e) => (format!("Tool error: {}", e.0), StepStatus::ToolError),
                                    }
                                }
                            }
                        }
                    }
                };
                if let Some(s) = run.hooks.supervisor.as_deref_mut() {
                    for note in s.take_notes() {
                        observation.push_str(&format!("\nOperator note: {note}"));
                    }
                }
                run.record(AgentStep {
                    index,
                    thought,
                    action: Action::Tool { name, input },
                    observation: Some(observation),
                    status,
                });
            }
        }
    }

    let retrieved_ids = budget.ids().to_vec();
    let steps = std::mem::take(&mut run.steps);
    hooks.emit(EpisodeEvent::Finished {
        incident_id: incident.id.clone(),
        mode: mode.to_string(),
        config_hash: hash.clone(),
        final_step: final_step.clone(),
        terminal,
        prediction: prediction.clone(),
        retrieved_ids: retrieved_ids.clone(),
        abort_reason: abort_reason.clone(),
    });
    let mut steps = steps;
    steps.extend(final_step);
    Trajectory {
        incident_id: incident.id.clone(),
        mode: mode.to_string(),
        config_hash: hash,
        steps,
        terminal,
        prediction,
        retrieved_ids,
        abort_reason,
    }
}
