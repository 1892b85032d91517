//! Incident details Q/A and the historical incident retrieval tools.

use std::sync::Arc;

use super::{
    field, parse_fields, InputField, Tool, ToolContext, ToolDescriptor, ToolError, HISTORICAL_INCIDENTS,
    HISTORICAL_QA, HISTORICAL_SEARCH, INCIDENT_DETAILS,
};
use crate::corpus::{Corpus, SummarizedIncident};
use crate::retrieval::{RetrievalHit, Retriever};
use crate::text::{split_by_tokens, token_count, truncate_to_tokens};

const NOT_FOUND: &str = "NOT FOUND";

/// Answers questions about the raw incident report.
#[derive(Debug, Clone)]
pub struct IncidentDetailsTool {
    /// Description tokens per model call.
    pub chunk_budget: usize,
}

impl Default for IncidentDetailsTool {
    fn default() -> Self {
        Self { chunk_budget: 1500 }
    }
}

impl Tool for IncidentDetailsTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: INCIDENT_DETAILS.into(),
            description: "Answers a specific question about the current incident using its full, unsummarized report."
                .into(),
            input_schema: vec![InputField::new("question", "text", "what you want to know about the incident")],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let fields = parse_fields(input, &["question"])?;
        let question = field(&fields, "question")?;
        let description = ctx.incident.description.trim();
        if description.is_empty() {
            return Ok("No description available for this incident.".into());
        }
        let system = format!(
            "Answer the question using only the incident report below. Do not guess. \
             If the report does not contain the answer, reply exactly: {NOT_FOUND}"
        );
        for chunk in split_by_tokens(description, self.chunk_budget.max(1)) {
            let user = format!(
                "Incident title: {}\nIncident description:\n{}\n\nQuestion: {question}",
                ctx.incident.title, chunk
            );
            let answer = ctx.utility.ask(&system, &user)?;
            if !answer.trim().eq_ignore_ascii_case(NOT_FOUND) {
                return Ok(answer.trim().to_string());
            }
        }
        Ok("Not found: the incident report does not contain this information.".into())
    }
}

fn render_doc(rank: usize, s: &SummarizedIncident) -> String {
    let mut out = format!("[{rank}] {}: {}\nSummary: {}\n", s.id, s.title, s.summary_description);
    if let Some(rc) = &s.summary_root_cause {
        out.push_str(&format!("Root cause: {rc}\n"));
    }
    out
}

fn admitted(
    retriever: &Retriever,
    query: &str,
    k: usize,
    ctx: &mut ToolContext<'_>,
) -> Result<(Vec<RetrievalHit>, usize), ToolError> {
    let hits = retriever.search(query, k).map_err(|e| ToolError(format!("retrieval failed: {e}")))?;
    Ok(ctx.budget.admit(hits))
}

fn budget_note(dropped: usize) -> String {
    if dropped == 0 {
        String::new()
    } else {
        format!("(retrieval budget reached: {dropped} more incidents withheld)\n")
    }
}

/// Single-step retrieval: the query combines the incident title, its summary
/// and the planner's query, and the top documents are returned as-is.
#[derive(Debug, Clone)]
pub struct HistoricalBrTool {
    pub retriever: Retriever,
    pub corpus: Arc<Corpus>,
    pub k: usize,
    /// Retrieval query length limit; the incident summary is cut first.
    pub max_query_tokens: usize,
}

impl HistoricalBrTool {
    pub fn new(retriever: Retriever, corpus: Arc<Corpus>, k: usize) -> Self {
        Self { retriever, corpus, k, max_query_tokens: 512 }
    }

    /// Retrieval query and whether the summary had to be shortened.
    pub fn query(&self, summary: &SummarizedIncident, agent_query: &str) -> (String, bool) {
        let fixed = token_count(&summary.title) + token_count(agent_query);
        let room = self.max_query_tokens.saturating_sub(fixed);
        let body = truncate_to_tokens(&summary.summary_description, room);
        let cut = body.len() < summary.summary_description.len();
        let parts: Vec<&str> = [summary.title.as_str(), body, agent_query.trim()]
            .into_iter()
            .filter(|p| !p.is_empty())
            .collect();
        (parts.join("\n"), cut)
    }
}

impl Tool for HistoricalBrTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: HISTORICAL_INCIDENTS.into(),
            description: "Retrieves historical incidents similar to the current one, together with their root causes. \
                          The current incident's title and summary are added to your query automatically."
                .into(),
            input_schema: vec![InputField::new("query", "text", "what to look for in past incidents")],
            retrieval_bearing: true,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let (query, cut) = self.query(ctx.summary, input);
        let (hits, dropped) = admitted(&self.retriever, &query, self.k, ctx)?;
        let mut out = String::new();
        if cut {
            out.push_str("(incident summary truncated for retrieval)\n");
        }
        if hits.is_empty() {
            out.push_str("No historical incidents found.\n");
        }
        for hit in &hits {
            let s = self.corpus.summary_or_raw(&hit.doc_id).map_err(|e| ToolError(e.to_string()))?;
            out.push_str(&render_doc(hit.rank, &s));
        }
        out.push_str(&budget_note(dropped));
        Ok(out.trim_end().to_string())
    }
}

/// First half of search-then-ask: finds incidents and remembers them for
/// [`HistoricalQaTool`].
#[derive(Debug, Clone)]
pub struct HistoricalSearchTool {
    pub retriever: Retriever,
    pub corpus: Arc<Corpus>,
    pub k: usize,
}

impl Tool for HistoricalSearchTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: HISTORICAL_SEARCH.into(),
            description: "Searches historical incidents and lists the titles of the matches. \
                          Ask questions about the matches with the historical question-answering tool."
                .into(),
            input_schema: vec![InputField::new("query", "text", "search terms")],
            retrieval_bearing: true,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let query = input.trim();
        if token_count(query) == 0 {
            ctx.scratch.search_ids = Some(Vec::new());
            return Ok("No historical incidents found (empty query).".into());
        }
        let (hits, dropped) = admitted(&self.retriever, query, self.k, ctx)?;
        ctx.scratch.search_ids = Some(hits.iter().map(|h| h.doc_id.clone()).collect());
        if hits.is_empty() {
            return Ok(format!("No historical incidents found.\n{}", budget_note(dropped)).trim_end().to_string());
        }
        let mut out = format!("Found {} historical incidents:\n", hits.len());
        for hit in &hits {
            let s = self.corpus.summary_or_raw(&hit.doc_id).map_err(|e| ToolError(e.to_string()))?;
            out.push_str(&format!("[{}] {}: {}\n", hit.rank, s.id, s.title));
        }
        out.push_str(&budget_note(dropped));
        Ok(out.trim_end().to_string())
    }
}

/// Second half of search-then-ask: question answering over the incidents
/// found by the last search.
#[derive(Debug, Clone)]
pub struct HistoricalQaTool {
    pub corpus: Arc<Corpus>,
    /// Include summarized discussions in the context.
    pub with_discussions: bool,
}

impl Tool for HistoricalQaTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: HISTORICAL_QA.into(),
            description: "Answers a question using the historical incidents found by the most recent search.".into(),
            input_schema: vec![InputField::new("question", "text", "question about the retrieved incidents")],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let fields = parse_fields(input, &["question"])?;
        let question = field(&fields, "question")?;
        let Some(ids) = ctx.scratch.search_ids.clone() else {
            return Ok(format!("No incidents have been retrieved yet. Call {HISTORICAL_SEARCH} first."));
        };
        if ids.is_empty() {
            return Ok(format!("The last search found no incidents. Call {HISTORICAL_SEARCH} with a different query."));
        }
        let mut context = String::new();
        for (i, id) in ids.iter().enumerate() {
            let s = self.corpus.summary_or_raw(id).map_err(|e| ToolError(e.to_string()))?;
            context.push_str(&render_doc(i + 1, &s));
            if self.with_discussions {
                if let Some(d) = &s.summary_discussion {
                    context.push_str(&format!("Discussion: {d}\n"));
                }
            }
            context.push('\n');
        }
        let system = "Answer the question using only the historical incidents below. \
                      If they do not contain the answer, say so.";
        let answer = ctx.utility.ask(system, &format!("{context}Question: {question}"))?;
        Ok(answer.trim().to_string())
    }
}

/// Historical-tool variant of the general-purpose agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactMode {
    /// one retrieval tool returning incidents with root causes
    ReactBr,
    /// search, then ask questions about the matches
    ReactSq,
}

impl ReactMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReactMode::ReactBr => "react-br",
            ReactMode::ReactSq => "react-sq",
        }
    }
}

impl std::fmt::Display for ReactMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReactMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "react-br" => Ok(ReactMode::ReactBr),
            "react-sq" => Ok(ReactMode::ReactSq),
            other => Err(format!("unknown agent mode '{other}' (expected react-br or react-sq)")),
        }
    }
}

/// Incident details plus the historical tools of `mode`.
pub fn react_toolset(mode: ReactMode, retriever: Retriever, corpus: Arc<Corpus>, k: usize, with_discussions: bool) -> super::Toolset {
    let base = super::Toolset::new().with(IncidentDetailsTool::default());
    match mode {
        ReactMode::ReactBr => base.with(HistoricalBrTool::new(retriever, corpus, k)),
        ReactMode::ReactSq => base
            .with(HistoricalSearchTool { retriever, corpus: corpus.clone(), k })
            .with(HistoricalQaTool { corpus, with_discussions }),
    }
}
