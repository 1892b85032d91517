//! The ReAct planner loop.
//!
//! Each iteration renders a zero-shot prompt holding the incident and the step
//! history, asks the planner for one step, parses it and either finishes or
//! runs a tool and records its observation. Tool failures and malformed steps
//! become observations; only planner failures abort an episode.

mod episode;
mod parse;
mod prompt;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::retrieval::RetrievalConfig;

pub use episode::{run_episode, Decision, EpisodeEvent, EpisodeObserver, Hooks, Supervisor};
pub use parse::{parse_step, Grammar, ParsedStep};
pub use prompt::{render_prompt, FORMAT_REMINDER};
pub use trajectory::{Action, AgentStep, StepStatus, Terminal, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub max_iterations: usize,
    pub retrieval: RetrievalConfig,
    /// Every tool call waits for operator approval.
    pub approval_required: bool,
    pub human_timeout_secs: f64,
    /// Hide documents already returned earlier in the episode.
    pub dedup_retrieval: bool,
    pub grammar: Grammar,
    /// Phrases marking a final answer as an admission of insufficient evidence.
    pub insufficient_phrases: Vec<String>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            retrieval: RetrievalConfig::default(),
            approval_required: false,
            human_timeout_secs: 300.0,
            dedup_retrieval: false,
            grammar: Grammar::default(),
            insufficient_phrases: [
                "insufficient evidence",
                "not enough information",
                "not enough evidence",
                "cannot determine",
                "can not determine",
                "unable to determine",
                "cannot be determined",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(self.human_timeout_secs >= 0.0) {
            return Err("human_timeout_secs must be non-negative".into());
        }
        self.retrieval.validate().map_err(|e| e.to_string())
    }

    pub fn human_timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.human_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Specific,
    InsufficientEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCausePrediction {
    pub incident_id: String,
    pub predicted_root_cause: String,
    pub verdict: Verdict,
    pub model_tag: String,
    /// Reasoning that preceded the answer, where the method produces one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

/// Splits a final answer into text and verdict. An explicit
/// `Verdict: insufficient_evidence|specific` line wins and is removed;
/// otherwise any of `phrases` (case-insensitive) marks insufficient evidence.
pub fn classify_answer(answer: &str, phrases: &[String]) -> (String, Verdict) {
    let mut explicit = None;
    let mut kept = Vec::new();
    for line in answer.lines() {
        let lower = line.trim().to_lowercase();
        if let Some(v) = lower.strip_prefix("verdict:") {
            let v = v.trim().replace([' ', '-'], "_");
            explicit = match v.as_str() {
                "insufficient_evidence" => Some(Verdict::InsufficientEvidence),
                "specific" => Some(Verdict::Specific),
                _ => explicit,
            };
            if explicit.is_some() {
                continue;
            }
        }
        kept.push(line);
    }
    let text = kept.join("\n").trim().to_string();
    let verdict = explicit.unwrap_or_else(|| {
        let lower = text.to_lowercase();
        if phrases.iter().any(|p| lower.contains(&p.to_lowercase())) {
            Verdict::InsufficientEvidence
        } else {
            Verdict::Specific
        }
    });
    (text, verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        let phrases = AgentConfig::default().insufficient_phrases;
        assert_eq!(classify_answer("quota exceeded", &phrases), ("quota exceeded".into(), Verdict::Specific));
        assert_eq!(
            classify_answer("There is insufficient evidence to name a cause.", &phrases).1,
            Verdict::InsufficientEvidence
        );
        assert_eq!(
            classify_answer("Logs are missing for the window.\nVerdict: insufficient_evidence", &phrases),
            ("Logs are missing for the window.".into(), Verdict::InsufficientEvidence)
        );
        assert_eq!(classify_answer("Verdict: specific\nUnable to determine? no: disk full", &phrases).1, Verdict::Specific);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = AgentConfig::default();
        assert_eq!(c.max_iterations, 20);
        assert_eq!(c.retrieval.k, 3);
        assert_eq!(c.retrieval.total_budget, 10);
        assert!(c.validate().is_ok());
        assert!(AgentConfig { max_iterations: 0, ..c.clone() }.validate().is_err());
        let parsed: AgentConfig = toml::from_str("max_iterations = 5\n[retrieval]\nk = 2\n").unwrap();
        assert_eq!((parsed.max_iterations, parsed.retrieval.k), (5, 2));
    }
}
