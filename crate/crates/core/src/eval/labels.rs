use std::collections::BTreeMap;
use std::fmt;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::agent::RootCausePrediction;
use crate::corpus::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    Precise,
    Imprecise,
    Hallucination,
    InsufficientEvidence,
    Other,
    ReasoningError,
    RetrievalError,
}

impl Subtype {
    pub fn display_name(self) -> &'static str {
        match self {
            Subtype::Precise => "Precise",
            Subtype::Imprecise => "Imprecise",
            Subtype::Hallucination => "Hallucination",
            Subtype::InsufficientEvidence => "Insufficient Evidence",
            Subtype::Other => "Other",
            Subtype::ReasoningError => "Reasoning Error",
            Subtype::RetrievalError => "Retrieval Error",
        }
    }
}

/// The eight allowed pairs, in table order (alphabetical within a group).
pub const VALID_LABELS: [(Correctness, Subtype); 8] = [
    (Correctness::Correct, Subtype::Imprecise),
    (Correctness::Correct, Subtype::Hallucination),
    (Correctness::Correct, Subtype::Precise),
    (Correctness::Incorrect, Subtype::Hallucination),
    (Correctness::Incorrect, Subtype::InsufficientEvidence),
    (Correctness::Incorrect, Subtype::Other),
    (Correctness::Incorrect, Subtype::ReasoningError),
    (Correctness::Incorrect, Subtype::RetrievalError),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLabel", into = "RawLabel")]
pub struct QualitativeLabel {
    correctness: Correctness,
    subtype: Subtype,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabel {
    correctness: Correctness,
    subtype: Subtype,
}

impl TryFrom<RawLabel> for QualitativeLabel {
    type Error = EvalError;
    fn try_from(raw: RawLabel) -> Result<Self, EvalError> {
        QualitativeLabel::new(raw.correctness, raw.subtype)
    }
}

impl From<QualitativeLabel> for RawLabel {
    fn from(l: QualitativeLabel) -> Self {
        RawLabel { correctness: l.correctness, subtype: l.subtype }
    }
}

impl QualitativeLabel {
    pub fn new(correctness: Correctness, subtype: Subtype) -> Result<Self, EvalError> {
        if VALID_LABELS.contains(&(correctness, subtype)) {
            Ok(Self { correctness, subtype })
        } else {
            Err(EvalError::Label(format!("subtype {subtype:?} is not allowed for a {correctness:?} answer")))
        }
    }

    pub fn correctness(&self) -> Correctness {
        self.correctness
    }

    pub fn subtype(&self) -> Subtype {
        self.subtype
    }
}

impl fmt::Display for QualitativeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.correctness {
            Correctness::Correct => "Correct",
            Correctness::Incorrect => "Incorrect",
        };
        write!(f, "{c}/{}", self.subtype.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub incident_id: String,
    pub model: String,
    pub label: QualitativeLabel,
    pub annotator: String,
    pub annotated_at: Timestamp,
}

pub fn label_prediction(prediction: &RootCausePrediction, label: QualitativeLabel, annotator: &str) -> Annotation {
    Annotation {
        incident_id: prediction.incident_id.clone(),
        model: prediction.model_tag.clone(),
        label,
        annotator: annotator.to_string(),
        annotated_at: Timestamp::from_datetime(Utc::now()),
    }
}

/// Items whose annotators gave different labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub incident_id: String,
    pub model: String,
    /// annotator -> label
    pub labels: BTreeMap<String, QualitativeLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub annotations: Vec<Annotation>,
}

impl LabelSet {
    pub fn add(&mut self, a: Annotation) {
        self.annotations.push(a);
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    /// Parses JSON lines, one annotation each. Blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let a: Annotation =
                serde_json::from_str(line).map_err(|e| EvalError::Label(format!("line {}: {e}", i + 1)))?;
            out.add(a);
        }
        Ok(out)
    }

    pub fn to_jsonl(&self) -> String {
        self.annotations.iter().map(|a| serde_json::to_string(a).expect("annotation serializes") + "\n").collect()
    }

    fn by_item(&self) -> BTreeMap<(&str, &str), Vec<&Annotation>> {
        let mut m: BTreeMap<(&str, &str), Vec<&Annotation>> = BTreeMap::new();
        for a in &self.annotations {
            m.entry((a.model.as_str(), a.incident_id.as_str())).or_default().push(a);
        }
        m
    }

    pub fn disagreements(&self) -> Vec<Disagreement> {
        let mut out = Vec::new();
        for ((model, id), anns) in self.by_item() {
            // the latest label of each annotator counts
            let mut labels: BTreeMap<String, (&Timestamp, QualitativeLabel)> = BTreeMap::new();
            for a in anns {
                let e = labels.entry(a.annotator.clone()).or_insert((&a.annotated_at, a.label));
                if a.annotated_at.instant() >= e.0.instant() {
                    *e = (&a.annotated_at, a.label);
                }
            }
            let first = labels.values().next().map(|v| v.1);
            if labels.values().any(|v| Some(v.1) != first) {
                out.push(Disagreement {
                    incident_id: id.to_string(),
                    model: model.to_string(),
                    labels: labels.into_iter().map(|(k, v)| (k, v.1)).collect(),
                });
            }
        }
        out
    }

    /// One label per (model, item): the most recent annotation wins.
    pub fn resolved(&self) -> BTreeMap<(String, String), QualitativeLabel> {
        self.by_item()
            .into_iter()
            .map(|((model, id), anns)| {
                let mut best = anns[0];
                for a in &anns[1..] {
                    if a.annotated_at.instant() >= best.annotated_at.instant() {
                        best = a;
                    }
                }
                ((model.to_string(), id.to_string()), best.label)
            })
            .collect()
    }

    pub fn tallies(&self) -> Vec<LabelTally> {
        let mut by_model: BTreeMap<String, LabelTally> = BTreeMap::new();
        for ((model, _), label) in self.resolved() {
            let t = by_model.entry(model.clone()).or_insert_with(|| LabelTally::empty(&model));
            t.record(label);
        }
        by_model.into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTally {
    pub model: String,
    /// Indexed like [`VALID_LABELS`].
    pub counts: [usize; 8],
}

impl LabelTally {
    pub fn empty(model: &str) -> Self {
        Self { model: model.to_string(), counts: [0; 8] }
    }

    pub fn record(&mut self, label: QualitativeLabel) {
        let i = VALID_LABELS
            .iter()
            .position(|&(c, s)| c == label.correctness && s == label.subtype)
            .expect("validated label");
        self.counts[i] += 1;
    }

    pub fn count(&self, correctness: Correctness, subtype: Subtype) -> usize {
        VALID_LABELS.iter().position(|&p| p == (correctness, subtype)).map_or(0, |i| self.counts[i])
    }

    pub fn group_total(&self, correctness: Correctness) -> usize {
        VALID_LABELS.iter().zip(&self.counts).filter(|((c, _), _)| *c == correctness).map(|(_, n)| n).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_is_partitioned() {
        let all = [
            Subtype::Precise,
            Subtype::Imprecise,
            Subtype::Hallucination,
            Subtype::InsufficientEvidence,
            Subtype::Other,
            Subtype::ReasoningError,
            Subtype::RetrievalError,
        ];
        let mut ok = 0;
        for c in [Correctness::Correct, Correctness::Incorrect] {
            for s in all {
                ok += QualitativeLabel::new(c, s).is_ok() as usize;
            }
        }
        assert_eq!(ok, 8);
        assert!(QualitativeLabel::new(Correctness::Incorrect, Subtype::Precise).is_err());
        assert!(QualitativeLabel::new(Correctness::Correct, Subtype::Other).is_err());
    }

    #[test]
    fn serde_rejects_bad_pairs() {
        assert!(serde_json::from_str::<QualitativeLabel>(r#"{"correctness":"incorrect","subtype":"precise"}"#).is_err());
        let l: QualitativeLabel = serde_json::from_str(r#"{"correctness":"correct","subtype":"precise"}"#).unwrap();
        assert_eq!(l.to_string(), "Correct/Precise");
    }
}
