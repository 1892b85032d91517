//! LLM summarization of incident descriptions, root causes and discussions.
//!
//! Discussions are chunked greedily by whole comments under a token budget;
//! a comment is split only when it alone exceeds the budget. Each chunk is
//! summarized, and when there is more than one chunk the partial summaries
//! are recombined with one final call.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{filter_comments, DiscussionComment, IncidentRecord, SummarizedIncident};
use crate::llm::{LlmError, LlmSession};
use crate::text::{split_by_tokens, token_count, truncate_to_tokens};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarizeConfig {
    /// Token budget for the description summary.
    pub description_budget: usize,
    pub root_cause_budget: usize,
    pub discussion_budget: usize,
    /// Maximum tokens of comment text per discussion chunk.
    pub chunk_budget: usize,
    /// Comments shorter than this are dropped before chunking.
    pub min_comment_tokens: usize,
    /// Templates; `{text}` is replaced by the input and `{budget}` by the
    /// token budget.
    pub description_prompt: String,
    pub root_cause_prompt: String,
    pub chunk_prompt: String,
    pub recombine_prompt: String,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            description_budget: 160,
            root_cause_budget: 80,
            discussion_budget: 160,
            chunk_budget: 512,
            min_comment_tokens: 8,
            description_prompt: "Summarize the following incident description in at most {budget} words. \
                Keep error messages, component names and symptoms; drop boilerplate.\n\n{text}"
                .into(),
            root_cause_prompt: "Summarize the following incident root cause in at most {budget} words. \
                State the cause itself, not the mitigation.\n\n{text}"
                .into(),
            chunk_prompt: "The following are discussion comments from an incident report. Summarize \
                the diagnostic steps taken and their findings in at most {budget} words.\n\n{text}"
                .into(),
            recombine_prompt: "Combine the following partial summaries of one incident discussion into \
                a single summary of at most {budget} words, in chronological order.\n\n{text}"
                .into(),
        }
    }
}

fn render(template: &str, text: &str, budget: usize) -> String {
    template.replace("{budget}", &budget.to_string()).replace("{text}", text)
}

const SUMMARIZER_SYSTEM: &str = "You summarize cloud incident reports for an on-call engineering team.";

#[derive(Debug, Error)]
#[error("summarizing {field} of {id} failed: {source}")]
pub struct SummarizeError {
    pub id: String,
    pub field: &'static str,
    #[source]
    pub source: LlmError,
    /// Fields completed before the failure.
    pub partial: Box<SummarizedIncident>,
}

fn summarize_text(
    session: &mut LlmSession,
    template: &str,
    text: &str,
    budget: usize,
) -> Result<String, LlmError> {
    let out = session.ask(SUMMARIZER_SYSTEM, &render(template, text, budget))?;
    Ok(truncate_to_tokens(out.trim(), budget).to_string())
}

/// Summarizes the description and root cause. Titles pass through; an empty
/// description or absent root cause costs no backend call.
pub fn summarize_incident(
    incident: &IncidentRecord,
    session: &mut LlmSession,
    config: &SummarizeConfig,
) -> Result<SummarizedIncident, SummarizeError> {
    let mut summary = SummarizedIncident {
        id: incident.id.clone(),
        title: incident.title.clone(),
        summary_description: String::new(),
        summary_root_cause: None,
        summary_discussion: None,
    };
    let fail = |field, source, partial: &SummarizedIncident| SummarizeError {
        id: incident.id.clone(),
        field,
        source,
        partial: Box::new(partial.clone()),
    };
    if !incident.description.trim().is_empty() {
        summary.summary_description = summarize_text(
            session,
            &config.description_prompt,
            &incident.description,
            config.description_budget,
        )
        .map_err(|e| fail("description", e, &summary))?;
    }
    if let Some(root_cause) = incident.root_cause.as_deref().filter(|r| !r.trim().is_empty()) {
        summary.summary_root_cause = Some(
            summarize_text(session, &config.root_cause_prompt, root_cause, config.root_cause_budget)
                .map_err(|e| fail("root_cause", e, &summary))?,
        );
    }
    Ok(summary)
}

/// Which step of discussion summarization failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkRef {
    Chunk(usize),
    Recombine,
}

impl fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkRef::Chunk(i) => write!(f, "chunk {i}"),
            ChunkRef::Recombine => f.write_str("recombination"),
        }
    }
}

#[derive(Debug, Error)]
#[error("discussion summarization failed at {at}: {source}")]
pub struct DiscussionError {
    pub at: ChunkRef,
    #[source]
    pub source: LlmError,
}

/// Greedy chunking by whole comments. Each chunk holds at most
/// `chunk_budget` tokens; comment bodies within a chunk are joined by
/// newlines. Token-free comments are skipped.
pub fn chunk_comments(comments: &[DiscussionComment], chunk_budget: usize) -> Vec<String> {
    assert!(chunk_budget > 0, "chunk budget must be positive");
    let mut chunks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut current_tokens = 0;
    for comment in comments {
        let body = comment.body.trim();
        let tokens = token_count(body);
        if tokens == 0 {
            continue;
        }
        if tokens > chunk_budget {
            if !current.is_empty() {
                chunks.push(current.join("\n"));
                current.clear();
            }
            let mut pieces = split_by_tokens(body, chunk_budget);
            let last = pieces.pop().expect("non-empty body has pieces");
            chunks.extend(pieces.into_iter().map(|p| p.trim().to_string()));
            current.push(last.trim());
            current_tokens = token_count(last);
            continue;
        }
        if current_tokens + tokens > chunk_budget {
            chunks.push(current.join("\n"));
            current.clear();
            current_tokens = 0;
        }
        current.push(body);
        current_tokens += tokens;
    }
    if !current.is_empty() {
        chunks.push(current.join("\n"));
    }
    chunks
}

/// Summarizes pre-filtered comments: one call per chunk plus one
/// recombination call when there is more than one chunk.
pub fn summarize_discussion(
    comments: &[DiscussionComment],
    session: &mut LlmSession,
    chunk_budget: usize,
    config: &SummarizeConfig,
) -> Result<String, DiscussionError> {
    let chunks = chunk_comments(comments, chunk_budget);
    let budget = config.discussion_budget;
    let mut partials = Vec::with_capacity(chunks.len());
    for (i, chunk) in chunks.iter().enumerate() {
        let summary = summarize_text(session, &config.chunk_prompt, chunk, budget)
            .map_err(|source| DiscussionError { at: ChunkRef::Chunk(i), source })?;
        partials.push(summary);
    }
    match partials.len() {
        0 => Ok(String::new()),
        1 => Ok(partials.pop().unwrap_or_default()),
        _ => {
            let joined = partials
                .iter()
                .enumerate()
                .map(|(i, p)| format!("Part {}: {p}", i + 1))
                .collect::<Vec<_>>()
                .join("\n");
            summarize_text(session, &config.recombine_prompt, &joined, budget)
                .map_err(|source| DiscussionError { at: ChunkRef::Recombine, source })
        }
    }
}

/// Full per-incident pass: description, root cause and (optionally) the
/// filtered discussion.
pub fn summarize_all(
    incident: &IncidentRecord,
    session: &mut LlmSession,
    config: &SummarizeConfig,
    discussions: bool,
) -> Result<SummarizedIncident, SummarizeError> {
    let mut summary = summarize_incident(incident, session, config)?;
    if discussions {
        let kept = filter_comments(&incident.comments, config.min_comment_tokens);
        let text = summarize_discussion(&kept, session, config.chunk_budget, config).map_err(|e| SummarizeError {
            id: incident.id.clone(),
            field: "discussion",
            source: e.source,
            partial: Box::new(summary.clone()),
        })?;
        summary.summary_discussion = Some(text);
    }
    Ok(summary)
}
