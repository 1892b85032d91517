use crate::corpus::SummarizedIncident;
use crate::llm::{ChatMessage, ChatRequest, LlmSession};
use crate::tools::ToolDescriptor;

use super::parse::Grammar;
use super::trajectory::{Action, AgentStep};

/// Observation injected after a completion that does not follow the format.
pub const FORMAT_REMINDER: &str = "Your last reply did not follow the required format. Reply with either \
    Thought/Action/Action Input lines or Thought/Final Answer lines.";

fn system_prompt(tools: &[ToolDescriptor], g: &Grammar) -> String {
    let mut s = String::from(
        "You are assisting an on-call engineer with root cause analysis of a cloud incident. \
         Work step by step: reason about what you know, call a tool to gather evidence, and read the \
         observation it returns. When you can name the root cause, give your final answer. If the evidence \
         you can gather is not enough to establish a root cause, say so instead of guessing and add the line \
         \"Verdict: insufficient_evidence\".\n\nTools:\n",
    );
    for t in tools {
        s.push_str(&format!("- {}: {}\n", t.name, t.description));
        let fields: Vec<String> =
            t.input_schema.iter().map(|f| format!("{} ({}): {}", f.name, f.ty, f.description)).collect();
        s.push_str(&format!("  Input: {}\n", fields.join("; ")));
    }
    s.push_str(&format!(
        "\nReply in exactly one of these two formats.\n\n\
         {t} <your reasoning>\n{a} <tool name>\n{i} <tool input; a JSON object when the tool has several fields>\n\n\
         {t} <your reasoning>\n{f} <the root cause>\n\n\
         Do not write the {o} line yourself; it is added after the tool runs.",
        t = g.thought,
        a = g.action,
        i = g.action_input,
        f = g.final_answer,
        o = g.observation
    ));
    s
}

fn history(steps: &[AgentStep], g: &Grammar) -> String {
    let mut s = String::new();
    for step in steps {
        match &step.action {
            Action::Tool { name, input } => {
                s.push_str(&format!("{} {}\n{} {name}\n{} {input}\n", g.thought, step.thought, g.action, g.action_input));
            }
            Action::Unparsed { raw } => {
                s.push_str(raw.trim());
                s.push('\n');
            }
            Action::Final { answer } => {
                s.push_str(&format!("{} {}\n{} {answer}\n", g.thought, step.thought, g.final_answer));
            }
        }
        if let Some(obs) = &step.observation {
            s.push_str(&format!("{} {}\n\n", g.observation, obs.trim_end()));
        }
    }
    s
}

/// Zero-shot request: instructions and tool list in the system message, the
/// incident and the full step history in the user message.
pub fn render_prompt(
    summary: &SummarizedIncident,
    steps: &[AgentStep],
    tools: &[ToolDescriptor],
    grammar: &Grammar,
    session: &LlmSession,
) -> ChatRequest {
    let description =
        if summary.summary_description.trim().is_empty() { "<empty>" } else { summary.summary_description.trim() };
    let mut user = format!("Incident title: {}\nIncident description: {description}\n\n", summary.title);
    if steps.is_empty() {
        user.push_str("Begin.\n");
    } else {
        user.push_str(&history(steps, grammar));
        user.push_str("Continue with the next step.\n");
    }
    session
        .request(vec![ChatMessage::system(system_prompt(tools, grammar)), ChatMessage::user(user)])
        .with_stop(format!("\n{}", grammar.observation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::StepStatus;
    use crate::llm::{ModelRole, Script};
    use crate::tools::InputField;

    fn tool(name: &str) -> ToolDescriptor {
        ToolDescriptor {
            name: name.into(),
            description: format!("does {}", name.len()),
            input_schema: vec![InputField::new("query", "text", "q")],
            retrieval_bearing: false,
        }
    }

    /// Occurrences of `word` not adjacent to identifier characters.
    fn count_word(text: &str, word: &str) -> usize {
        let ident = |c: char| c.is_alphanumeric() || c == '_';
        text.match_indices(word)
            .filter(|(i, _)| {
                let before = text[..*i].chars().next_back();
                let after = text[i + word.len()..].chars().next();
                !before.is_some_and(ident) && !after.is_some_and(ident)
            })
            .count()
    }

    fn summary() -> SummarizedIncident {
        SummarizedIncident {
            id: "INC-1".into(),
            title: "Blob errors".into(),
            summary_description: String::new(),
            summary_root_cause: None,
            summary_discussion: None,
        }
    }

    #[test]
    fn tool_names_once_and_empty_description() {
        let session = LlmSession::scripted(Script::default(), ModelRole::Planner);
        let tools = [tool("historical_incidents"), tool("historical_incidents_search"), tool("incident_details")];
        let req = render_prompt(&summary(), &[], &tools, &Grammar::default(), &session);
        let text = req.prompt_text();
        for t in &tools {
            assert_eq!(count_word(&text, &t.name), 1, "{}", t.name);
        }
        assert!(text.contains("Incident description: <empty>"));
        assert!(!text.lines().any(|l| l.starts_with("Observation:")));
        assert_eq!(req.stop_sequences, ["\nObservation:"]);
    }

    #[test]
    fn history_in_order() {
        let session = LlmSession::scripted(Script::default(), ModelRole::Planner);
        let steps: Vec<AgentStep> = (1..=3)
            .map(|i| AgentStep {
                index: i,
                thought: format!("t{i}"),
                action: Action::Tool { name: "x".into(), input: format!("in{i}") },
                observation: Some(format!("obs-{i}")),
                status: StepStatus::Ok,
            })
            .collect();
        let text = render_prompt(&summary(), &steps, &[tool("x")], &Grammar::default(), &session).prompt_text();
        let positions: Vec<usize> = (1..=3).map(|i| text.find(&format!("Observation: obs-{i}")).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(text.lines().filter(|l| l.starts_with("Observation: ")).count(), 3);
    }
}
