//! Lexical and embedding metrics, answer labels and report tables.

pub mod labels;
pub mod metrics;
pub mod report;

use thiserror::Error;

pub use labels::{label_prediction, Annotation, Correctness, Disagreement, LabelSet, LabelTally, QualitativeLabel, Subtype, VALID_LABELS};
pub use metrics::{corpus_bleu, meteor_lite, rouge_l, semantic_similarity, sentence_bleu, MetricConfig, Smoothing};
pub use report::{
    load_predictions, load_references, render_label_table, render_metric_table, row_from_items, EvaluationReport, ItemScores,
    ModelRow,
};

use crate::retrieval::EmbedError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {references} references")]
    LengthMismatch { predictions: usize, references: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid metric config: {0}")]
    Config(String),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}
