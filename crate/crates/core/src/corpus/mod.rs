//! Incident records, ingestion and the historical retrieval corpus.
//!
//! Raw incidents arrive as line-delimited JSON. Accepted records are kept
//! verbatim; summaries produced by [`summarize`] live beside them, keyed by
//! incident id. A built corpus is immutable and can be shared freely between
//! readers.

mod store;
pub mod summarize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text::token_count;

pub use store::{CorpusManifest, CorpusStore, StoreError, MANIFEST_FILE, RAW_FILE, SPLIT_FILE, SUMMARY_FILE};
pub use summarize::{
    chunk_comments, summarize_all, summarize_discussion, summarize_incident, ChunkRef, DiscussionError, SummarizeConfig,
    SummarizeError,
};

/// RFC 3339 timestamp that remembers its original spelling, so re-serializing
/// a record reproduces the input text exactly.
#[derive(Debug, Clone)]
pub struct Timestamp {
    raw: String,
    parsed: DateTime<Utc>,
}

impl Timestamp {
    pub fn parse(raw: &str) -> Result<Self, chrono::ParseError> {
        let parsed = DateTime::parse_from_rfc3339(raw)?.with_timezone(&Utc);
        Ok(Self { raw: raw.to_string(), parsed })
    }

    pub fn from_datetime(at: DateTime<Utc>) -> Self {
        Self { raw: at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true), parsed: at }
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.parsed
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}

impl Eq for Timestamp {}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Timestamp::parse(&raw).map_err(|e| serde::de::Error::custom(format!("invalid timestamp {raw:?}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthorRole {
    Oce,
    System,
    Customer,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscussionComment {
    pub author_role: AuthorRole,
    pub body: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub root_cause: Option<String>,
    #[serde(default)]
    pub comments: Vec<DiscussionComment>,
    pub created_at: Timestamp,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl IncidentRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if let Some(pos) = self
            .comments
            .windows(2)
            .position(|w| w[1].created_at.instant() < w[0].created_at.instant())
        {
            return Err(format!("comments out of timestamp order at index {}", pos + 1));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizedIncident {
    pub id: String,
    pub title: String,
    pub summary_description: String,
    #[serde(default)]
    pub summary_root_cause: Option<String>,
    #[serde(default)]
    pub summary_discussion: Option<String>,
}

impl SummarizedIncident {
    /// Summary that copies the raw text through; used where no summarizer
    /// is involved (scenario incidents, fixtures).
    pub fn passthrough(record: &IncidentRecord) -> Self {
        Self {
            id: record.id.clone(),
            title: record.title.clone(),
            summary_description: record.description.clone(),
            summary_root_cause: record.root_cause.clone(),
            summary_discussion: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: BTreeSet<String>,
    pub eval: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("incident {0} appears in more than one split")]
    Overlap(String),
    #[error("incident {0} is not assigned to any split")]
    Missing(String),
    #[error("split mentions unknown incident {0}")]
    Unknown(String),
    #[error("split sizes {eval} + {test} exceed corpus size {total}")]
    TooLarge { eval: usize, test: usize, total: usize },
}

impl CorpusSplit {
    /// Everything in train.
    pub fn all_train<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        Self { train: ids.into_iter().map(str::to_string).collect(), ..Self::default() }
    }

    /// Seeded random split with fixed eval and test sizes; the rest is train.
    pub fn random(ids: &[String], eval: usize, test: usize, seed: u64) -> Result<Self, SplitError> {
        if eval + test > ids.len() {
            return Err(SplitError::TooLarge { eval, test, total: ids.len() });
        }
        let mut shuffled: Vec<String> = ids.to_vec();
        shuffled.sort();
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);
        let eval_ids = shuffled[..eval].iter().cloned().collect();
        let test_ids = shuffled[eval..eval + test].iter().cloned().collect();
        let train = shuffled[eval + test..].iter().cloned().collect();
        Ok(Self { train, eval: eval_ids, test: test_ids })
    }

    /// Disjointness and exact coverage of `ids`.
    pub fn check<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<(), SplitError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for id in self.train.iter().chain(&self.eval).chain(&self.test) {
            *seen.entry(id.as_str()).or_default() += 1;
        }
        if let Some((id, _)) = seen.iter().find(|(_, n)| **n > 1) {
            return Err(SplitError::Overlap(id.to_string()));
        }
        let expected: BTreeSet<&str> = ids.into_iter().collect();
        if let Some(id) = expected.iter().find(|id| !seen.contains_key(*id)) {
            return Err(SplitError::Missing(id.to_string()));
        }
        let mut unknown: Vec<&str> = seen.keys().filter(|id| !expected.contains(*id)).copied().collect();
        unknown.sort_unstable();
        match unknown.first() {
            Some(id) => Err(SplitError::Unknown(id.to_string())),
            None => Ok(()),
        }
    }
}

/// Hook applied to every parsed record before validation, e.g. for redaction.
pub trait PreIngestHook {
    fn apply(&self, record: &mut IncidentRecord);
}

impl<F: Fn(&mut IncidentRecord)> PreIngestHook for F {
    fn apply(&self, record: &mut IncidentRecord) {
        self(record)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the source.
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown incident id {0}")]
    UnknownIncident(String),
    #[error("duplicate incident id {0}")]
    DuplicateId(String),
    #[error("summary for {0} has no matching incident")]
    OrphanSummary(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
}

/// Raw incidents, their summaries and the train/eval/test split.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<IncidentRecord>,
    positions: HashMap<String, usize>,
    summaries: BTreeMap<String, SummarizedIncident>,
    split: CorpusSplit,
}

impl Corpus {
    /// Builds a corpus from already-validated records; every record is train.
    pub fn from_records(records: Vec<IncidentRecord>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        for record in records {
            if corpus.positions.contains_key(&record.id) {
                return Err(CorpusError::DuplicateId(record.id));
            }
            corpus.push(record);
        }
        Ok(corpus)
    }

    fn push(&mut self, record: IncidentRecord) {
        self.positions.insert(record.id.clone(), self.records.len());
        self.split.train.insert(record.id.clone());
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IncidentRecord] {
        &self.records
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&IncidentRecord> {
        self.positions.get(id).map(|&i| &self.records[i])
    }

    pub fn summary(&self, id: &str) -> Option<&SummarizedIncident> {
        self.summaries.get(id)
    }

    pub fn summaries(&self) -> impl Iterator<Item = &SummarizedIncident> {
        self.summaries.values()
    }

    pub fn insert_summary(&mut self, summary: SummarizedIncident) -> Result<(), CorpusError> {
        if !self.positions.contains_key(&summary.id) {
            return Err(CorpusError::OrphanSummary(summary.id));
        }
        self.summaries.insert(summary.id.clone(), summary);
        Ok(())
    }

    pub fn split(&self) -> &CorpusSplit {
        &self.split
    }

    pub fn set_split(&mut self, split: CorpusSplit) -> Result<(), SplitError> {
        split.check(self.ids())?;
        self.split = split;
        Ok(())
    }

    /// Summaries of train incidents in id order. Train incidents without a
    /// summary are skipped.
    pub fn train_summaries(&self) -> Vec<&SummarizedIncident> {
        self.split.train.iter().filter_map(|id| self.summaries.get(id)).collect()
    }

    /// Summary for `id`, or a passthrough of the raw record.
    pub fn summary_or_raw(&self, id: &str) -> Result<SummarizedIncident, CorpusError> {
        if let Some(s) = self.summaries.get(id) {
            return Ok(s.clone());
        }
        self.get(id)
            .map(SummarizedIncident::passthrough)
            .ok_or_else(|| CorpusError::UnknownIncident(id.to_string()))
    }
}

/// Reads line-delimited incident records. Malformed and duplicate lines are
/// rejected with a reason; ingestion continues past them.
pub fn ingest_incidents<R: BufRead>(
    source: R,
    hook: Option<&dyn PreIngestHook>,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut corpus = Corpus::default();
    let mut report = IngestReport::default();
    for (index, line) in source.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: IncidentRecord = match serde_json::from_str(&line) {
            Ok(record) => record,
            Err(e) => {
                report.rejected.push(Rejection { line: number, id: None, reason: format!("parse error: {e}") });
                continue;
            }
        };
        if let Some(hook) = hook {
            hook.apply(&mut record);
        }
        if let Err(reason) = record.validate() {
            report.rejected.push(Rejection { line: number, id: Some(record.id), reason });
            continue;
        }
        if corpus.positions.contains_key(&record.id) {
            report.rejected.push(Rejection {
                line: number,
                id: Some(record.id.clone()),
                reason: format!("duplicate id {}", record.id),
            });
            continue;
        }
        corpus.push(record);
        report.accepted += 1;
    }
    Ok((corpus, report))
}

/// Drops comments with fewer than `min_tokens` tokens; order is preserved.
pub fn filter_comments(comments: &[DiscussionComment], min_tokens: usize) -> Vec<DiscussionComment> {
    comments.iter().filter(|c| token_count(&c.body) >= min_tokens).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn line(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","title":"t {id}","description":"d","root_cause":null,"comments":[],"created_at":"2021-01-01T00:00:00Z","metadata":{{}}}}"#
        )
    }

    fn comment(body: &str, at: &str) -> DiscussionComment {
        DiscussionComment { author_role: AuthorRole::Oce, body: body.into(), created_at: Timestamp::parse(at).unwrap() }
    }

    #[test]
    fn three_valid_lines() {
        let input = [line("a"), line("b"), line("c")].join("\n");
        let (corpus, report) = ingest_incidents(input.as_bytes(), None).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(report.accepted, 3);
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn malformed_line_is_rejected_and_ingestion_continues() {
        let input = [line("a"), "{not json".to_string(), line("b")].join("\n");
        let (corpus, report) = ingest_incidents(input.as_bytes(), None).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].line, 2);
        assert!(report.rejected[0].reason.starts_with("parse error"));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let input = [line("INC-1"), line("INC-1")].join("\n");
        let (corpus, report) = ingest_incidents(input.as_bytes(), None).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.rejected[0].id.as_deref(), Some("INC-1"));
        assert!(report.rejected[0].reason.contains("duplicate"));
    }

    #[test]
    fn empty_id_and_unordered_comments_are_rejected() {
        let bad_order = r#"{"id":"x","title":"t","comments":[{"author_role":"oce","body":"b","created_at":"2021-01-02T00:00:00Z"},{"author_role":"oce","body":"a","created_at":"2021-01-01T00:00:00Z"}],"created_at":"2021-01-01T00:00:00Z"}"#;
        let input = [line(""), bad_order.to_string()].join("\n");
        let (corpus, report) = ingest_incidents(input.as_bytes(), None).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(report.rejected.len(), 2);
        assert!(report.rejected[1].reason.contains("out of timestamp order"));
    }

    #[test]
    fn hook_runs_before_validation() {
        let redact = |r: &mut IncidentRecord| r.description = r.description.replace('d', "[x]");
        let (corpus, _) = ingest_incidents(line("a").as_bytes(), Some(&redact)).unwrap();
        assert_eq!(corpus.get("a").unwrap().description, "[x]");
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let raw = r#"{"id":"INC-9","title":"Specified blob does not exist.","description":"It was throwing an error \"Specified blob does not exist\"","root_cause":"storage account deleted","comments":[{"author_role":"customer","body":"still failing","created_at":"2020-09-23T10:00:00+02:00"}],"created_at":"2020-09-23T08:00:00.000Z","metadata":{"severity":"A","team":"db"}}"#;
        let (corpus, report) = ingest_incidents(raw.as_bytes(), None).unwrap();
        assert_eq!(report.accepted, 1);
        let out = serde_json::to_string(corpus.get("INC-9").unwrap()).unwrap();
        assert_eq!(out, raw);
    }

    #[test]
    fn filter_examples() {
        let comments = vec![
            comment("ack thanks", "2021-01-01T00:00:00Z"),
            comment("checked the logs on the cluster and saw ingestion failures", "2021-01-01T00:01:00Z"),
            comment(&"word ".repeat(50), "2021-01-01T00:02:00Z"),
        ];
        let counts: Vec<usize> = comments.iter().map(|c| token_count(&c.body)).collect();
        assert_eq!(counts, vec![2, 10, 50]);
        let kept = filter_comments(&comments, 8);
        assert_eq!(kept, comments[1..].to_vec());
        assert_eq!(filter_comments(&comments, 0), comments);
        assert!(filter_comments(&comments, 51).is_empty());
    }

    #[test]
    fn random_split_is_disjoint_and_covering() {
        let ids: Vec<String> = (0..50).map(|i| format!("INC-{i:03}")).collect();
        let split = CorpusSplit::random(&ids, 5, 10, 7).unwrap();
        assert_eq!((split.train.len(), split.eval.len(), split.test.len()), (35, 5, 10));
        split.check(ids.iter().map(String::as_str)).unwrap();
        assert_eq!(split, CorpusSplit::random(&ids, 5, 10, 7).unwrap());
        assert!(CorpusSplit::random(&ids, 40, 11, 7).is_err());
    }

    #[test]
    fn split_check_detects_overlap_and_gaps() {
        let ids = ["a", "b"];
        let mut split = CorpusSplit::all_train(ids);
        split.eval.insert("a".into());
        assert_eq!(split.check(ids), Err(SplitError::Overlap("a".into())));
        let split = CorpusSplit::all_train(["a"]);
        assert_eq!(split.check(ids), Err(SplitError::Missing("b".into())));
        let split = CorpusSplit::all_train(["a", "b", "c"]);
        assert_eq!(split.check(ids), Err(SplitError::Unknown("c".into())));
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent(bodies in proptest::collection::vec("[a-z ]{0,60}", 0..12), min in 0usize..12) {
            let comments: Vec<_> = bodies.iter().map(|b| comment(b, "2021-01-01T00:00:00Z")).collect();
            let once = filter_comments(&comments, min);
            prop_assert_eq!(filter_comments(&once, min), once);
        }

        #[test]
        fn any_seeded_split_holds_the_invariant(n in 0usize..40, eval in 0usize..10, test in 0usize..10, seed: u64) {
            let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
            if let Ok(split) = CorpusSplit::random(&ids, eval, test, seed) {
                prop_assert!(split.check(ids.iter().map(String::as_str)).is_ok());
            } else {
                prop_assert!(eval + test > n);
            }
        }
    }
}
