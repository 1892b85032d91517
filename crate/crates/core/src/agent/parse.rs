//! Reading planner completions in the Thought / Action / Final Answer format.

use serde::{Deserialize, Serialize};

/// Line labels of the step format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grammar {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub final_answer: String,
    pub observation: String,
}

impl Default for Grammar {
    fn default() -> Self {
        Self {
            thought: "Thought:".into(),
            action: "Action:".into(),
            action_input: "Action Input:".into(),
            final_answer: "Final Answer:".into(),
            observation: "Observation:".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedStep {
    Tool { thought: String, name: String, input: String },
    Final { thought: String, answer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Thought,
    Action,
    Input,
    Final,
    Observation,
}

fn label_of<'a>(line: &'a str, g: &Grammar) -> Option<(Label, &'a str)> {
    let line = line.trim_start();
    // longer labels first so "Action Input:" never reads as "Action:"
    let mut labels = [
        (Label::Input, &g.action_input),
        (Label::Final, &g.final_answer),
        (Label::Thought, &g.thought),
        (Label::Action, &g.action),
        (Label::Observation, &g.observation),
    ];
    labels.sort_by_key(|(_, l)| std::cmp::Reverse(l.len()));
    labels
        .into_iter()
        .find_map(|(label, text)| line.strip_prefix(text.as_str()).map(|rest| (label, rest)))
}

/// Parses one completion. `None` means the text does not follow the format.
///
/// Text before the first label counts as the thought. Anything after an
/// `Observation:` line is ignored, since observations come from tools.
pub fn parse_step(text: &str, grammar: &Grammar) -> Option<ParsedStep> {
    let mut preamble = String::new();
    let mut segments: Vec<(Label, String)> = Vec::new();
    for line in text.trim().lines() {
        match label_of(line, grammar) {
            Some((Label::Observation, _)) => break,
            Some((label, rest)) => segments.push((label, rest.trim().to_string())),
            None => match segments.last_mut() {
                Some((_, content)) => {
                    content.push('\n');
                    content.push_str(line);
                }
                None => {
                    preamble.push_str(line);
                    preamble.push('\n');
                }
            },
        }
    }
    let find = |want: Label| segments.iter().position(|(l, _)| *l == want);
    let thought = match find(Label::Thought) {
        Some(i) => segments[i].1.trim().to_string(),
        None => preamble.trim().to_string(),
    };
    match (find(Label::Final), find(Label::Action)) {
        (Some(f), a) if a.is_none_or(|a| f < a) => Some(ParsedStep::Final { thought, answer: segments[f].1.trim().to_string() }),
        (_, Some(a)) => {
            let name = segments[a].1.lines().next().unwrap_or("").trim().trim_matches(|c| c == '`' || c == '"' || c == '\'');
            if name.is_empty() {
                return None;
            }
            let input = segments[a + 1..]
                .iter()
                .find(|(l, _)| *l == Label::Input)
                .map(|(_, c)| c.trim().to_string())
                .unwrap_or_default();
            Some(ParsedStep::Tool { thought, name: name.to_string(), input })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Option<ParsedStep> {
        parse_step(text, &Grammar::default())
    }

    #[test]
    fn tool_step() {
        assert_eq!(
            p("Thought: check history\nAction: historical_incidents\nAction Input: blob error"),
            Some(ParsedStep::Tool {
                thought: "check history".into(),
                name: "historical_incidents".into(),
                input: "blob error".into()
            })
        );
    }

    #[test]
    fn final_step() {
        assert_eq!(
            p("  Thought: done\nFinal Answer: quota exceeded \n"),
            Some(ParsedStep::Final { thought: "done".into(), answer: "quota exceeded".into() })
        );
    }

    #[test]
    fn unlabelled_text_fails() {
        assert_eq!(p("I think we should look at the logs first."), None);
        assert_eq!(p(""), None);
        assert_eq!(p("Thought: hmm\nAction:   \nAction Input: x"), None);
    }

    #[test]
    fn lenient_cases() {
        // multi-line input, invented observation dropped, thought without label
        let step = p("I need data\nAction: db_query\nAction Input: {\"cluster\": \"c\",\n \"query\": \"SELECT * FROM t\"}\nObservation: fake").unwrap();
        let ParsedStep::Tool { thought, name, input } = step else { panic!() };
        assert_eq!(thought, "I need data");
        assert_eq!(name, "db_query");
        assert!(input.ends_with("\"SELECT * FROM t\"}"));
        // missing input is empty
        assert!(matches!(p("Thought: t\nAction: kba_plan"), Some(ParsedStep::Tool { input, .. }) if input.is_empty()));
        // final answer spanning lines
        let Some(ParsedStep::Final { answer, .. }) = p("Thought: t\nFinal Answer: line one\nline two") else { panic!() };
        assert_eq!(answer, "line one\nline two");
    }

    #[test]
    fn custom_labels() {
        let g = Grammar { thought: "Reasoning:".into(), final_answer: "Answer:".into(), ..Grammar::default() };
        assert_eq!(
            parse_step("Reasoning: r\nAnswer: a", &g),
            Some(ParsedStep::Final { thought: "r".into(), answer: "a".into() })
        );
    }
}
