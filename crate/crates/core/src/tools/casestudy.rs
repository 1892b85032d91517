//! Diagnostic tools: database query, table Q/A, KBA Q/A and planning, and
//! the human interaction tool.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::kba::{KbaDocument, KbaStore};
use super::{
    field, parse_fields, InputField, Tool, ToolContext, ToolDescriptor, ToolError, ASK_HUMAN, DB_QUERY, KBA_PLAN,
    KBA_QA, TABLE_QA,
};
use crate::table::{run_plan, DataTable, OpKind, TableOp, RENDER_ROWS};

/// Executes queries against a named cluster and database.
pub trait DatabaseAdapter: Send + Sync {
    /// Error strings are shown to the planner verbatim.
    fn query(&self, cluster: &str, database: &str, query: &str) -> Result<DataTable, String>;
}

pub struct DbQueryTool {
    pub db: Arc<dyn DatabaseAdapter>,
    /// Extra text for the descriptor, e.g. a summary of the query syntax.
    pub syntax_hint: String,
}

impl DbQueryTool {
    pub fn new(db: Arc<dyn DatabaseAdapter>) -> Self {
        Self { db, syntax_hint: String::new() }
    }
}

impl Tool for DbQueryTool {
    fn descriptor(&self) -> ToolDescriptor {
        let mut description = "Runs a query against a database on a cluster. The result is stored as a table that \
                               the table question-answering tool can analyze. Cluster addresses and sample queries are in the KBAs."
            .to_string();
        if !self.syntax_hint.is_empty() {
            description.push(' ');
            description.push_str(&self.syntax_hint);
        }
        ToolDescriptor {
            name: DB_QUERY.into(),
            description,
            input_schema: vec![
                InputField::new("cluster", "text", "address of the cluster hosting the database"),
                InputField::new("database", "text", "database name"),
                InputField::new("query", "text", "query text"),
            ],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let fields = parse_fields(input, &["cluster", "database", "query"])?;
        let (cluster, database, query) = (field(&fields, "cluster")?, field(&fields, "database")?, field(&fields, "query")?);
        let table = self.db.query(cluster, database, query).map_err(|e| ToolError(format!("query failed: {e}")))?;
        let rendered = table.render(RENDER_ROWS);
        let handle = ctx.scratch.store_table(cluster, database, query, table);
        Ok(format!("Query succeeded; result stored as table {}.\n{}", handle.id, rendered.trim_end()))
    }
}

/// Transformation plan produced by the table model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablePlan {
    pub ops: Vec<TableOp>,
    /// Sentence with a `{result}` placeholder.
    #[serde(default)]
    pub answer: Option<String>,
}

impl TablePlan {
    /// Reads the first JSON object in `text`.
    pub fn parse(text: &str) -> Result<Self, ToolError> {
        let start = text.find('{');
        let end = text.rfind('}');
        let (Some(start), Some(end)) = (start, end) else {
            return Err(ToolError("could not parse table plan: no JSON object in model output".into()));
        };
        if end < start {
            return Err(ToolError("could not parse table plan: no JSON object in model output".into()));
        }
        serde_json::from_str(&text[start..=end]).map_err(|e| ToolError(format!("could not parse table plan: {e}")))
    }

    /// Runs the plan and renders the answer, with the operation kinds run.
    pub fn execute(&self, table: &DataTable) -> Result<(String, Vec<OpKind>), ToolError> {
        let (result, trace) = run_plan(table, &self.ops).map_err(|e| ToolError(e.to_string()))?;
        let text = match (result.columns.len(), result.rows.len()) {
            (1, 1) => result.rows[0][0].to_string(),
            (1, 0) => "no rows".to_string(),
            (1, _) => result.rows.iter().map(|r| r[0].to_string()).collect::<Vec<_>>().join(", "),
            _ => result.render(RENDER_ROWS).trim_end().to_string(),
        };
        let answer = match &self.answer {
            Some(template) if template.contains("{result}") => template.replace("{result}", &text),
            _ => text,
        };
        Ok((answer, trace))
    }
}

const TABLE_PLAN_INSTRUCTIONS: &str = r#"You answer questions about a table by planning transformations.
Reply with one JSON object: {"ops": [...], "answer": "sentence containing {result}"}.
Allowed operations, applied in order:
{"op": "filter", "column": C, "cmp": "=" | "!=" | "<" | "<=" | ">" | ">=", "value": V}
{"op": "project", "columns": [C, ...]}
{"op": "aggregate", "func": "count" | "sum" | "min" | "max" | "mean", "column": C (optional for count), "group_by": C (optional)}
{"op": "sort", "column": C, "descending": true | false}
{"op": "head", "n": N}
No other operations exist."#;

#[derive(Debug, Clone, Copy, Default)]
pub struct TableQaTool;

impl Tool for TableQaTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: TABLE_QA.into(),
            description: "Answers a natural-language question about a table returned by a database query \
                          (filtering, counting, listing values)."
                .into(),
            input_schema: vec![
                InputField::new("table", "table id", "table to analyze; defaults to the latest result"),
                InputField::new("question", "text", "question about the table"),
            ],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let fields = parse_fields(input, &["table", "question"]).unwrap_or_default();
        let question = fields.get("question").cloned().unwrap_or_else(|| input.trim().to_string());
        let id = match fields.get("table").filter(|t| !t.is_empty()) {
            Some(t) => t.clone(),
            None => ctx
                .scratch
                .last_table
                .clone()
                .ok_or_else(|| ToolError("no table available; run db_query first".into()))?,
        };
        let Some((handle, table)) = ctx.scratch.tables.get(&id) else {
            let known: Vec<&str> = ctx.scratch.tables.keys().map(String::as_str).collect();
            return Err(ToolError(format!("unknown table '{id}'; available: {}", known.join(", "))));
        };
        let columns: Vec<String> = table.columns.iter().map(|c| format!("{} ({})", c.name, c.ty)).collect();
        let user = format!(
            "Table {} ({} rows). Columns: {}\nFirst rows:\n{}\nQuestion: {question}",
            handle.id,
            handle.row_count,
            columns.join(", "),
            table.render(5)
        );
        let table = table.clone();
        let reply = ctx.utility.ask(TABLE_PLAN_INSTRUCTIONS, &user)?;
        let plan = TablePlan::parse(&reply)?;
        Ok(plan.execute(&table)?.0)
    }
}

/// Where KBA content comes from: a KBA pinned to the incident, or the store.
#[derive(Debug, Clone)]
pub struct KbaSource {
    pub store: Arc<KbaStore>,
    pub pinned: Option<KbaDocument>,
    /// Chunks retrieved per question.
    pub top_n: usize,
}

impl KbaSource {
    /// KBA text relevant to `query`; the pinned KBA bypasses the store.
    fn context(&self, query: &str) -> Result<Option<String>, ToolError> {
        if let Some(kba) = &self.pinned {
            return Ok(Some(format!("KBA {}: {}\n{}", kba.id, kba.title, kba.body)));
        }
        if self.store.is_empty() {
            return Ok(None);
        }
        let hits = self.store.search(query, self.top_n).map_err(|e| ToolError(e.to_string()))?;
        let parts: Vec<String> = hits.iter().map(|(doc, chunk)| format!("KBA {}: {chunk}", doc.id)).collect();
        Ok(Some(parts.join("\n---\n")))
    }
}

#[derive(Debug, Clone)]
pub struct KbaQaTool(pub KbaSource);

impl KbaQaTool {
    pub fn new(store: Arc<KbaStore>, pinned: Option<KbaDocument>) -> Self {
        Self(KbaSource { store, pinned, top_n: 3 })
    }
}

impl Tool for KbaQaTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: KBA_QA.into(),
            description: "Answers questions from the team's knowledge base articles (troubleshooting guides, \
                          cluster addresses, database names, sample queries)."
                .into(),
            input_schema: vec![InputField::new("question", "text", "what to look up")],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let fields = parse_fields(input, &["question"])?;
        let question = field(&fields, "question")?;
        let Some(context) = self.0.context(question)? else {
            return Ok("No KBA available to answer this question.".into());
        };
        let system = "Answer the question using only the knowledge base excerpts below. \
                      If they do not contain the answer, say that the KBA does not cover it.";
        Ok(ctx.utility.ask(system, &format!("{context}\n\nQuestion: {question}"))?.trim().to_string())
    }
}

#[derive(Debug, Clone)]
pub struct KbaPlanTool(pub KbaSource);

impl KbaPlanTool {
    pub fn new(store: Arc<KbaStore>, pinned: Option<KbaDocument>) -> Self {
        Self(KbaSource { store, pinned, top_n: 3 })
    }
}

impl Tool for KbaPlanTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: KBA_PLAN.into(),
            description: "Produces a numbered high-level troubleshooting plan for the current incident from the \
                          knowledge base. Use it before taking concrete diagnostic steps."
                .into(),
            input_schema: vec![InputField::new("focus", "text", "optional aspect to plan for")],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let query = format!("{}\n{}\n{}", ctx.summary.title, ctx.summary.summary_description, input.trim());
        let Some(context) = self.0.context(query.trim())? else {
            return Ok("A troubleshooting plan cannot be formed: no KBA available.".into());
        };
        let system = "Write a numbered, high-level troubleshooting plan for the incident, based only on the \
                      knowledge base excerpts. One step per line.";
        let user = format!(
            "{context}\n\nIncident title: {}\nIncident summary: {}\nFocus: {}",
            ctx.summary.title,
            ctx.summary.summary_description,
            input.trim()
        );
        Ok(ctx.utility.ask(system, &user)?.trim().to_string())
    }
}

fn seconds(d: Duration) -> String {
    let s = d.as_secs_f64();
    if s.fract() == 0.0 {
        format!("{}s", s as u64)
    } else {
        format!("{s:.1}s")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AskHumanTool;

impl Tool for AskHumanTool {
    fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: ASK_HUMAN.into(),
            description: "Asks the on-call engineer for information or an action you cannot perform yourself \
                          (e.g. a missing cluster address, reproducing an error)."
                .into(),
            input_schema: vec![InputField::new("request", "text", "what you need from the engineer")],
            retrieval_bearing: false,
        }
    }

    fn call(&self, input: &str, ctx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        match ctx.human.ask(input.trim(), ctx.human_timeout) {
            Some(answer) => Ok(answer),
            None => Ok(format!("no human response within {}", seconds(ctx.human_timeout))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, ColumnType, Value};

    fn table() -> DataTable {
        DataTable::new(
            vec![Column::new("cluster", ColumnType::Text), Column::new("tenant_count", ColumnType::Int)],
            vec![
                vec![Value::Text("cl-a".into()), Value::Int(0)],
                vec![Value::Text("cl-b".into()), Value::Int(0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn count_plan_on_zero_matches() {
        let plan = TablePlan::parse(
            r#"Plan: {"ops":[{"op":"filter","column":"tenant_count","cmp":">","value":0},{"op":"aggregate","func":"count"}]}"#,
        )
        .unwrap();
        assert_eq!(plan.execute(&table()).unwrap().0, "0");
    }

    #[test]
    fn list_and_template() {
        let plan = TablePlan {
            ops: vec![TableOp::Project { columns: vec!["cluster".into()] }],
            answer: Some("Clusters: {result}".into()),
        };
        assert_eq!(plan.execute(&table()).unwrap().0, "Clusters: cl-a, cl-b");
    }

    #[test]
    fn bad_plans() {
        let plan = TablePlan::parse(r#"{"ops":[{"op":"filter","column":"tenants","cmp":">","value":0}]}"#).unwrap();
        assert!(plan.execute(&table()).unwrap_err().0.contains("tenants"));
        assert!(TablePlan::parse("no json here").is_err());
        assert!(TablePlan::parse(r#"{"ops":[{"op":"python","code":"x"}]}"#).is_err());
    }

    #[test]
    fn seconds_format() {
        assert_eq!(seconds(Duration::from_secs(30)), "30s");
        assert_eq!(seconds(Duration::from_millis(1500)), "1.5s");
    }
}
