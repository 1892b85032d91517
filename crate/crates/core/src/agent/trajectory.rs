use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::EpisodeEvent;
use super::RootCausePrediction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Tool { name: String, input: String },
    Final { answer: String },
    /// Completion that did not follow the step format, kept verbatim.
    Unparsed { raw: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Final,
    ToolError,
    UnknownTool,
    ParseError,
    BudgetExhausted,
    Denied,
    Interjected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStep {
    /// 1-based.
    pub index: usize,
    pub thought: String,
    pub action: Action,
    /// Absent exactly on the final step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    pub status: StepStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    FinalAnswer,
    IterationCap,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub incident_id: String,
    pub mode: String,
    /// Fingerprint of the agent configuration used.
    pub config_hash: String,
    pub steps: Vec<AgentStep>,
    pub terminal: Terminal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<RootCausePrediction>,
    /// Unique retrieved incident ids in first-seen order.
    pub retrieved_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl Trajectory {
    /// Pretty JSON with a trailing newline; stable for identical episodes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trajectory serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.prediction.as_ref().map(|p| p.predicted_root_cause.as_str())
    }

    /// Tool calls in order as (tool, input, status).
    pub fn tool_calls(&self) -> impl Iterator<Item = (&str, &str, StepStatus)> {
        self.steps.iter().filter_map(|s| match &s.action {
            Action::Tool { name, input } => Some((name.as_str(), input.as_str(), s.status)),
            _ => None,
        })
    }

    /// Rebuilds the trajectory from an episode's event stream. `None` when the
    /// stream has no closing event.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a EpisodeEvent>) -> Option<Trajectory> {
        let mut steps = Vec::new();
        for event in events {
            match event {
                EpisodeEvent::Observation { record, .. } => steps.push(record.clone()),
                EpisodeEvent::Finished {
                    incident_id,
                    mode,
                    config_hash,
                    final_step,
                    terminal,
                    prediction,
                    retrieved_ids,
                    abort_reason,
                } => {
                    steps.extend(final_step.clone());
                    return Some(Trajectory {
                        incident_id: incident_id.clone(),
                        mode: mode.clone(),
                        config_hash: config_hash.clone(),
                        steps,
                        terminal: *terminal,
                        prediction: prediction.clone(),
                        retrieved_ids: retrieved_ids.clone(),
                        abort_reason: abort_reason.clone(),
                    });
                }
                _ => {}
            }
        }
        None
    }
}
