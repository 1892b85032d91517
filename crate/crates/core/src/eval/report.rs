use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::labels::{Correctness, LabelSet, LabelTally, VALID_LABELS};
use super::metrics::{corpus_bleu, meteor_lite, rouge_l, semantic_similarity, sentence_bleu, MetricConfig};
use super::EvalError;
use crate::agent::RootCausePrediction;
use crate::retrieval::Embedder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub model: String,
    pub incident_id: String,
    pub s_bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub semantic: f64,
}

/// Scores are kept in [0, 1]; rendering scales lexical ones by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub n: usize,
    pub c_bleu: f64,
    pub s_bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub semantic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ModelRow>,
    pub items: Vec<ItemScores>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_tallies: Vec<LabelTally>,
}

#[derive(Deserialize)]
struct RefLine {
    #[serde(alias = "id")]
    incident_id: String,
    #[serde(alias = "reference")]
    root_cause: Option<String>,
}

/// Reference root causes from JSON lines carrying `incident_id` (or `id`)
/// and `root_cause` (or `reference`). Raw incident records qualify.
pub fn load_references(text: &str) -> Result<BTreeMap<String, String>, EvalError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RefLine = serde_json::from_str(line).map_err(|e| EvalError::Input(format!("references line {}: {e}", i + 1)))?;
        let Some(rc) = r.root_cause else {
            return Err(EvalError::Input(format!("references line {}: {} has no root cause", i + 1, r.incident_id)));
        };
        if out.insert(r.incident_id.clone(), rc).is_some() {
            return Err(EvalError::Input(format!("duplicate reference for {}", r.incident_id)));
        }
    }
    Ok(out)
}

pub fn load_predictions(text: &str) -> Result<Vec<RootCausePrediction>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Input(format!("predictions line {}: {e}", i + 1))))
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

impl EvaluationReport {
    /// Scores every prediction against its reference, grouped by model tag.
    pub fn build(
        predictions: &[RootCausePrediction],
        references: &BTreeMap<String, String>,
        labels: Option<&LabelSet>,
        config: &MetricConfig,
        embedder: &dyn Embedder,
    ) -> Result<Self, EvalError> {
        config.validate()?;
        let mut groups: BTreeMap<&str, Vec<(&RootCausePrediction, &str)>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for p in predictions {
            let Some(r) = references.get(&p.incident_id) else {
                return Err(EvalError::Misaligned(format!("no reference for {} (model {})", p.incident_id, p.model_tag)));
            };
            if !seen.insert((p.model_tag.as_str(), p.incident_id.as_str())) {
                return Err(EvalError::Misaligned(format!("duplicate prediction for {} (model {})", p.incident_id, p.model_tag)));
            }
            groups.entry(p.model_tag.as_str()).or_default().push((p, r.as_str()));
        }

        let mut rows = Vec::new();
        let mut items = Vec::new();
        for (model, pairs) in groups {
            let start = items.len();
            for (p, r) in &pairs {
                let pred = p.predicted_root_cause.as_str();
                items.push(ItemScores {
                    model: model.to_string(),
                    incident_id: p.incident_id.clone(),
                    s_bleu: sentence_bleu(pred, r, config),
                    rouge_l: rouge_l(pred, r, config),
                    meteor: meteor_lite(pred, r, config),
                    semantic: semantic_similarity(pred, r, embedder)?,
                });
            }
            let preds: Vec<&str> = pairs.iter().map(|(p, _)| p.predicted_root_cause.as_str()).collect();
            let refs: Vec<&str> = pairs.iter().map(|(_, r)| *r).collect();
            rows.push(row_from_items(model, &items[start..], corpus_bleu(&preds, &refs, config)?));
        }

        let label_tallies = labels.map(LabelSet::tallies).unwrap_or_default();
        Ok(Self { rows, items, label_tallies })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Metric table, then the label table when tallies exist.
    pub fn render(&self) -> String {
        let mut out = render_metric_table(&self.rows);
        if !self.label_tallies.is_empty() {
            out.push('\n');
            out.push_str(&render_label_table(&self.label_tallies));
        }
        out
    }
}

pub fn row_from_items(model: &str, items: &[ItemScores], c_bleu: f64) -> ModelRow {
    ModelRow {
        model: model.to_string(),
        n: items.len(),
        c_bleu,
        s_bleu: mean(items.iter().map(|i| i.s_bleu)),
        rouge_l: mean(items.iter().map(|i| i.rouge_l)),
        meteor: mean(items.iter().map(|i| i.meteor)),
        semantic: mean(items.iter().map(|i| i.semantic)),
    }
}

fn pad_table(rows: &[Vec<String>], left_cols: usize) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut w = vec![0; width];
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| if i < left_cols { format!("{c:<0$}", w[i]) } else { format!("{c:>0$}", w[i]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

pub fn render_metric_table(rows: &[ModelRow]) -> String {
    let mut t = vec![["Model", "C-BLEU", "S-BLEU", "ROUGE-L", "METEOR-lite", "Semantic"].map(String::from).to_vec()];
    for r in rows {
        t.push(vec![
            r.model.clone(),
            format!("{:.2}", r.c_bleu * 100.0),
            format!("{:.2}", r.s_bleu * 100.0),
            format!("{:.2}", r.rouge_l * 100.0),
            format!("{:.2}", r.meteor * 100.0),
            format!("{:.3}", r.semantic),
        ]);
    }
    pad_table(&t, 1)
}

/// Counts per label and model; zero renders as "-".
pub fn render_label_table(tallies: &[LabelTally]) -> String {
    let mut header = vec![String::new(), "Type".to_string()];
    header.extend(tallies.iter().map(|t| t.model.clone()));
    let mut t = vec![header];
    let cell = |n: usize| if n == 0 { "-".to_string() } else { n.to_string() };
    for group in [Correctness::Correct, Correctness::Incorrect] {
        let name = match group {
            Correctness::Correct => "Correct",
            Correctness::Incorrect => "Incorrect",
        };
        let mut first = true;
        for &(c, s) in VALID_LABELS.iter().filter(|(c, _)| *c == group) {
            let mut row = vec![if first { name.to_string() } else { String::new() }, s.display_name().to_string()];
            row.extend(tallies.iter().map(|t| cell(t.count(c, s))));
            t.push(row);
            first = false;
        }
        let mut all = vec![String::new(), "All".to_string()];
        all.extend(tallies.iter().map(|t| cell(t.group_total(group))));
        t.push(all);
    }
    let mut total = vec!["Total".to_string(), String::new()];
    total.extend(tallies.iter().map(|t| t.total().to_string()));
    t.push(total);
    pad_table(&t, 2)
}
