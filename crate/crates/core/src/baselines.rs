//! Non-agent baselines: retrieval-augmented prompting (RB), zero-shot
//! chain-of-thought over the same context (CoT), and chain-of-thought with
//! retrieval after every reasoning step (IR-CoT).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{classify_answer, AgentConfig, RootCausePrediction};
use crate::corpus::{Corpus, SummarizedIncident};
use crate::llm::{ChatMessage, ChatRequest, LlmError, LlmSession};
use crate::retrieval::{IndexKind, RetrievalError, Retriever};
use crate::text::truncate_to_tokens;
use crate::tools::RetrievalBudget;

pub const COT_PREFIX: &str = "Let's think step by step.";
pub const ANSWER_SENTINEL: &str = "Final Answer:";
/// Token limit on the incident text used as the retrieval query.
const QUERY_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    Rb,
    Cot,
    Ircot,
}

impl std::str::FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rb" => Ok(Self::Rb),
            "cot" => Ok(Self::Cot),
            "ircot" => Ok(Self::Ircot),
            other => Err(format!("unknown baseline mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleOrder {
    /// Most relevant example closest to the question.
    #[default]
    MostRelevantLast,
    MostRelevantFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub mode: BaselineMode,
    /// Examples for RB and CoT; documents per round for IR-CoT.
    pub k: usize,
    pub ircot_budget: usize,
    pub retriever_kind: IndexKind,
    pub example_order: ExampleOrder,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mode: BaselineMode::Rb,
            k: 3,
            ircot_budget: 10,
            retriever_kind: IndexKind::Sparse,
            example_order: ExampleOrder::MostRelevantLast,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.mode == BaselineMode::Ircot && self.ircot_budget < self.k {
            return Err(BaselineError::Config(format!(
                "ircot_budget ({}) must be at least k ({})",
                self.ircot_budget, self.k
            )));
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        match self.mode {
            BaselineMode::Rb => format!("rb(k={})", self.k),
            BaselineMode::Cot => format!("cot(k={})", self.k),
            BaselineMode::Ircot => format!("ircot-{}(k={},budget={})", self.retriever_kind, self.k, self.ircot_budget),
        }
    }
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid baseline config: {0}")]
    Config(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub prediction: RootCausePrediction,
    /// Documents placed in context, in retrieval order.
    pub retrieved_ids: Vec<String>,
    /// Retrieval queries issued, in order.
    pub queries: Vec<String>,
    pub completions: usize,
    /// The last request sent to the model.
    pub last_request: ChatRequest,
}

const SYSTEM: &str = "You are an expert on-call engineer for a large cloud service. Given a new incident and \
     similar historical incidents with their known root causes, state the most likely root cause of the new \
     incident in one or two sentences. If the available information is not enough to determine a root cause, \
     say so.";

fn example_block(n: usize, s: &SummarizedIncident) -> String {
    format!(
        "Example {n}:\nTitle: {}\nSummary: {}\nRoot cause: {}\n\n",
        s.title,
        s.summary_description,
        s.summary_root_cause.as_deref().unwrap_or("unknown")
    )
}

fn incident_block(s: &SummarizedIncident) -> String {
    let description = if s.summary_description.trim().is_empty() { "<empty>" } else { s.summary_description.trim() };
    format!("New incident:\nTitle: {}\nDescription: {description}\n\n", s.title)
}

/// Prompt with `examples` as in-context demonstrations, in the order given.
/// With `cot` the answer prompt carries the step-by-step prefix.
pub fn render_examples_prompt(
    incident: &SummarizedIncident,
    examples: &[SummarizedIncident],
    cot: bool,
    session: &LlmSession,
) -> ChatRequest {
    let mut user = String::new();
    for (i, e) in examples.iter().enumerate() {
        user.push_str(&example_block(i + 1, e));
    }
    user.push_str(&incident_block(incident));
    if cot {
        user.push_str(&format!(
            "Root cause: {COT_PREFIX} Write your reasoning, then give the root cause on a last line starting with \
             \"{ANSWER_SENTINEL}\"."
        ));
    } else {
        user.push_str("Root cause:");
    }
    session.request(vec![ChatMessage::system(SYSTEM), ChatMessage::user(user)])
}

pub fn incident_query(incident: &SummarizedIncident) -> String {
    truncate_to_tokens(&format!("{}\n{}", incident.title, incident.summary_description), QUERY_TOKENS).to_string()
}

/// Splits a reasoning completion into (reasoning, answer). The answer follows
/// the last sentinel; without one it is the last non-empty line.
pub fn split_answer(text: &str) -> (String, String) {
    if let Some(pos) = text.rfind(ANSWER_SENTINEL) {
        return (text[..pos].trim().to_string(), text[pos + ANSWER_SENTINEL.len()..].trim().to_string());
    }
    let lines: Vec<&str> = text.trim().lines().collect();
    match lines.iter().rposition(|l| !l.trim().is_empty()) {
        Some(i) => (lines[..i].join("\n").trim().to_string(), lines[i].trim().to_string()),
        None => (String::new(), String::new()),
    }
}

fn prediction(incident: &SummarizedIncident, answer: &str, tag: String, reasoning: Option<String>) -> RootCausePrediction {
    let (text, verdict) = classify_answer(answer, &AgentConfig::default().insufficient_phrases);
    RootCausePrediction {
        incident_id: incident.id.clone(),
        predicted_root_cause: text,
        verdict,
        model_tag: tag,
        reasoning: reasoning.filter(|r| !r.is_empty()),
    }
}

fn load(corpus: &Corpus, ids: &[String]) -> Result<Vec<SummarizedIncident>, BaselineError> {
    ids.iter()
        .map(|id| corpus.summary_or_raw(id).map_err(|_| BaselineError::Retrieval(RetrievalError::UnknownDoc(id.clone()))))
        .collect()
}

pub fn run_baseline(
    incident: &SummarizedIncident,
    config: &BaselineConfig,
    retriever: &Retriever,
    corpus: &Corpus,
    session: &mut LlmSession,
) -> Result<BaselineRun, BaselineError> {
    config.validate()?;
    match config.mode {
        BaselineMode::Rb | BaselineMode::Cot => run_examples(incident, config, retriever, corpus, session),
        BaselineMode::Ircot => run_ircot(incident, config, retriever, corpus, session),
    }
}

/// RB and CoT. On context overflow the example count drops to the largest
/// k' < k that fits, recorded in the model tag.
fn run_examples(
    incident: &SummarizedIncident,
    config: &BaselineConfig,
    retriever: &Retriever,
    corpus: &Corpus,
    session: &mut LlmSession,
) -> Result<BaselineRun, BaselineError> {
    let query = incident_query(incident);
    let hits = retriever.search(&query, config.k)?;
    let ids: Vec<String> = hits.iter().map(|h| h.doc_id.clone()).collect();
    let mut docs = load(corpus, &ids)?;
    if config.example_order == ExampleOrder::MostRelevantLast {
        docs.reverse();
    }
    let cot = config.mode == BaselineMode::Cot;
    let mut used = docs.len();
    let request = loop {
        // drop the least relevant examples first
        let shown: &[SummarizedIncident] = match config.example_order {
            ExampleOrder::MostRelevantLast => &docs[docs.len() - used..],
            ExampleOrder::MostRelevantFirst => &docs[..used],
        };
        let request = render_examples_prompt(incident, shown, cot, session);
        match session.check_fits(&request) {
            Ok(_) => break request,
            Err(e @ LlmError::ContextOverflow { .. }) => {
                if used == 0 {
                    return Err(e.into());
                }
                used -= 1;
            }
            Err(e) => return Err(e.into()),
        }
    };
    let mut tag = config.tag();
    if used < docs.len() {
        tag = format!("{tag}[k={}->{used}]", docs.len());
    }
    let reply = session.complete(&request)?;
    let (reasoning, answer) = if cot { split_answer(&reply) } else { (String::new(), reply.trim().to_string()) };
    Ok(BaselineRun {
        prediction: prediction(incident, &answer, tag, Some(reasoning)),
        retrieved_ids: ids,
        queries: vec![query],
        completions: 1,
        last_request: request,
    })
}

fn render_ircot(incident: &SummarizedIncident, docs: &[SummarizedIncident], steps: &[String], force: bool, session: &LlmSession) -> ChatRequest {
    let mut user = String::new();
    for (i, d) in docs.iter().enumerate() {
        user.push_str(&example_block(i + 1, d));
    }
    user.push_str(&incident_block(incident));
    user.push_str(&format!(
        "Reason one step at a time. Reply with only the next reasoning step. When you know the root cause, reply \
         with \"{ANSWER_SENTINEL} <root cause>\".\n\n{COT_PREFIX}\n"
    ));
    for s in steps {
        user.push_str(s);
        user.push('\n');
    }
    if force {
        user.push_str(ANSWER_SENTINEL);
    }
    session.request(vec![ChatMessage::system(SYSTEM), ChatMessage::user(user)])
}

/// IR-CoT: retrieve with the incident text, then after each reasoning step
/// retrieve with that step's text until an answer appears. Once the unique
/// document budget is spent, one last completion is forced to answer, so at
/// most `ircot_budget + 1` completions are made.
fn run_ircot(
    incident: &SummarizedIncident,
    config: &BaselineConfig,
    retriever: &Retriever,
    corpus: &Corpus,
    session: &mut LlmSession,
) -> Result<BaselineRun, BaselineError> {
    let mut budget = RetrievalBudget::new(config.ircot_budget).with_dedup(true);
    let mut docs = Vec::new();
    let mut queries = Vec::new();
    let mut steps: Vec<String> = Vec::new();
    let mut completions = 0;

    let retrieve = |q: &str, budget: &mut RetrievalBudget, docs: &mut Vec<SummarizedIncident>, queries: &mut Vec<String>| {
        queries.push(q.to_string());
        let (kept, _) = budget.admit(retriever.search(q, config.k)?);
        let ids: Vec<String> = kept.into_iter().map(|h| h.doc_id).collect();
        docs.extend(load(corpus, &ids)?);
        Ok::<(), BaselineError>(())
    };

    retrieve(&incident_query(incident), &mut budget, &mut docs, &mut queries)?;
    for _ in 0..config.ircot_budget.max(1) {
        if budget.exhausted() {
            break;
        }
        let request = render_ircot(incident, &docs, &steps, false, session);
        let step = session.complete(&request)?;
        completions += 1;
        let step = step.trim().to_string();
        if step.contains(ANSWER_SENTINEL) {
            let (before, answer) = split_answer(&step);
            if !before.is_empty() {
                steps.push(before);
            }
            return Ok(finish_ircot(incident, config, &answer, steps, budget, queries, completions, request));
        }
        retrieve(&step, &mut budget, &mut docs, &mut queries)?;
        steps.push(step);
    }
    let request = render_ircot(incident, &docs, &steps, true, session);
    let reply = session.complete(&request)?;
    completions += 1;
    let answer = split_answer(&format!("{ANSWER_SENTINEL} {reply}")).1;
    Ok(finish_ircot(incident, config, &answer, steps, budget, queries, completions, request))
}

#[allow(clippy::too_many_arguments)]
fn finish_ircot(
    incident: &SummarizedIncident,
    config: &BaselineConfig,
    answer: &str,
    steps: Vec<String>,
    budget: RetrievalBudget,
    queries: Vec<String>,
    completions: usize,
    request: ChatRequest,
) -> BaselineRun {
    BaselineRun {
        prediction: prediction(incident, answer, config.tag(), Some(steps.join("\n"))),
        retrieved_ids: budget.ids().to_vec(),
        queries,
        completions,
        last_request: request,
    }
}
