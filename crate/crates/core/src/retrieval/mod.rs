//! Sparse (BM25) and dense (embedding + MMR) retrieval over the train split
//! of a corpus, plus post-retrieval discussion augmentation.
//!
//! Built indexes are immutable; a [`Retriever`] is cheap to clone and safe to
//! share across threads.

mod bm25;
mod dense;
mod persist;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SummarizedIncident};

pub use bm25::{idf, Bm25Index, Bm25Params};
pub use dense::{cosine, mmr_select, DenseError, DenseIndex, EmbedError, Embedder, HashEmbedder, HttpEmbedder};
pub use persist::{index_paths, load_index, save_index, IndexManifest};

/// Scores closer than this are ties and fall back to id order.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Sparse,
    Dense,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Sparse => "sparse",
            IndexKind::Dense => "dense",
        })
    }
}

impl std::str::FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" => Ok(IndexKind::Sparse),
            "dense" => Ok(IndexKind::Dense),
            other => Err(format!("unknown index kind {other:?} (expected sparse or dense)")),
        }
    }
}

/// Which summary fields make up an indexed document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexField {
    Title,
    Description,
    RootCause,
    Discussion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hash { dim: usize, seed: u64 },
    Http { endpoint: String, model: String, dim: usize, api_key_env: String },
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hash { dim: 256, seed: 17 }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Arc<dyn Embedder> {
        match self {
            EmbedderConfig::Hash { dim, seed } => Arc::new(HashEmbedder::new(*dim, *seed)),
            EmbedderConfig::Http { endpoint, model, dim, api_key_env } => {
                Arc::new(HttpEmbedder::new(endpoint, model, *dim, api_key_env))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Documents per search call.
    pub k: usize,
    /// Unique documents per episode.
    pub total_budget: usize,
    pub mmr_lambda: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub fields: Vec<IndexField>,
    pub embedder: EmbedderConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 3,
            total_budget: 10,
            mmr_lambda: 0.5,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            fields: vec![IndexField::Title, IndexField::Description, IndexField::RootCause],
            embedder: EmbedderConfig::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: String| Err(RetrievalError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.k > self.total_budget {
            return bad(format!("k = {} exceeds total_budget = {}", self.k, self.total_budget));
        }
        if !(0.0..=1.0).contains(&self.mmr_lambda) {
            return bad(format!("mmr_lambda = {} is outside [0, 1]", self.mmr_lambda));
        }
        if !(self.bm25_k1 > 0.0) {
            return bad(format!("bm25_k1 = {} must be positive", self.bm25_k1));
        }
        if !(0.0..=1.0).contains(&self.bm25_b) {
            return bad(format!("bm25_b = {} is outside [0, 1]", self.bm25_b));
        }
        if self.fields.is_empty() {
            return bad("at least one index field is required".into());
        }
        Ok(())
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params { k1: self.bm25_k1, b: self.bm25_b }
    }

    /// Text indexed for one incident.
    pub fn document_text(&self, s: &SummarizedIncident) -> String {
        let parts = self.fields.iter().filter_map(|f| match f {
            IndexField::Title => Some(s.title.as_str()),
            IndexField::Description => Some(s.summary_description.as_str()),
            IndexField::RootCause => s.summary_root_cause.as_deref(),
            IndexField::Discussion => s.summary_discussion.as_deref(),
        });
        parts.filter(|p| !p.is_empty()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_discussion: Option<String>,
}

impl RetrievalHit {
    pub fn new(doc_id: &str, score: f64, rank: usize) -> Self {
        Self { doc_id: doc_id.to_string(), score, rank, augmented_discussion: None }
    }
}

/// Top `k` of `scored` by score descending, ties (within [`TIE_EPSILON`]) by
/// id ascending.
pub(crate) fn rank_hits(mut scored: Vec<(&str, f64)>, k: usize) -> Vec<RetrievalHit> {
    let mut hits = Vec::new();
    while hits.len() < k && !scored.is_empty() {
        let mut best = 0;
        for i in 1..scored.len() {
            let (id, s) = scored[i];
            let (bid, bs) = scored[best];
            if s > bs + TIE_EPSILON || ((s - bs).abs() <= TIE_EPSILON && id < bid) {
                best = i;
            }
        }
        let (id, s) = scored.swap_remove(best);
        hits.push(RetrievalHit::new(id, s, hits.len() + 1));
    }
    hits
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid retrieval configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index was built with embedder {built}, searched with {given}")]
    EmbedderMismatch { built: String, given: String },
    #[error("retrieved document {0} is not in the corpus")]
    UnknownDoc(String),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
    #[error("unsupported index format version {0}")]
    Version(u32),
}

impl From<DenseError> for RetrievalError {
    fn from(e: DenseError) -> Self {
        match e {
            DenseError::Embed(e) => RetrievalError::Embed(e),
            DenseError::EmbedderMismatch { built, given } => RetrievalError::EmbedderMismatch { built, given },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RetrievalIndex {
    Sparse(Bm25Index),
    Dense(DenseIndex),
}

impl RetrievalIndex {
    pub fn kind(&self) -> IndexKind {
        match self {
            RetrievalIndex::Sparse(_) => IndexKind::Sparse,
            RetrievalIndex::Dense(_) => IndexKind::Dense,
        }
    }

    pub fn doc_ids(&self) -> &[String] {
        match self {
            RetrievalIndex::Sparse(i) => i.doc_ids(),
            RetrievalIndex::Dense(i) => i.doc_ids(),
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids().len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids().is_empty()
    }
}

/// Indexes every train incident once, in id order, using its summary (or the
/// raw record when it has none).
pub fn build_index(
    corpus: &Corpus,
    config: &RetrievalConfig,
    kind: IndexKind,
    embedder: Option<&dyn Embedder>,
) -> Result<RetrievalIndex, RetrievalError> {
    config.validate()?;
    let docs: Vec<(String, String)> = corpus
        .split()
        .train
        .iter()
        .map(|id| {
            let s = corpus.summary_or_raw(id).map_err(|_| RetrievalError::UnknownDoc(id.clone()))?;
            Ok((id.clone(), config.document_text(&s)))
        })
        .collect::<Result<_, RetrievalError>>()?;
    let pairs = docs.iter().map(|(id, text)| (id.as_str(), text.as_str()));
    match kind {
        IndexKind::Sparse => Ok(RetrievalIndex::Sparse(Bm25Index::build(pairs, config.bm25_params()))),
        IndexKind::Dense => {
            let embedder =
                embedder.ok_or_else(|| RetrievalError::Config("a dense index needs an embedder".into()))?;
            Ok(RetrievalIndex::Dense(DenseIndex::build(pairs, embedder)?))
        }
    }
}

/// Search handle over one index.
#[derive(Clone)]
pub struct Retriever {
    index: Arc<RetrievalIndex>,
    embedder: Option<Arc<dyn Embedder>>,
    lambda: f64,
}

impl fmt::Debug for Retriever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Retriever")
            .field("kind", &self.kind())
            .field("docs", &self.index.len())
            .field("embedder", &self.embedder.as_ref().map(|e| e.id()))
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl Retriever {
    pub fn sparse(index: Bm25Index) -> Self {
        Self { index: Arc::new(RetrievalIndex::Sparse(index)), embedder: None, lambda: 1.0 }
    }

    pub fn dense(index: DenseIndex, embedder: Arc<dyn Embedder>, lambda: f64) -> Result<Self, RetrievalError> {
        if embedder.id() != index.embedder_id() {
            return Err(RetrievalError::EmbedderMismatch { built: index.embedder_id().into(), given: embedder.id() });
        }
        Ok(Self { index: Arc::new(RetrievalIndex::Dense(index)), embedder: Some(embedder), lambda })
    }

    /// Wraps a built or loaded index; dense indexes get the embedder described
    /// by `config`.
    pub fn from_index(index: RetrievalIndex, config: &RetrievalConfig) -> Result<Self, RetrievalError> {
        match index {
            RetrievalIndex::Sparse(i) => Ok(Self::sparse(i)),
            RetrievalIndex::Dense(i) => Self::dense(i, config.embedder.build(), config.mmr_lambda),
        }
    }

    /// Builds an index over `corpus` and wraps it.
    pub fn build(corpus: &Corpus, config: &RetrievalConfig, kind: IndexKind) -> Result<Self, RetrievalError> {
        let embedder = config.embedder.build();
        let index = build_index(corpus, config, kind, Some(embedder.as_ref()))?;
        match index {
            RetrievalIndex::Sparse(i) => Ok(Self::sparse(i)),
            RetrievalIndex::Dense(i) => Self::dense(i, embedder, config.mmr_lambda),
        }
    }

    pub fn kind(&self) -> IndexKind {
        self.index.kind()
    }

    pub fn index(&self) -> &RetrievalIndex {
        &self.index
    }

    pub fn search(&self, query: &str, k: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        match (&*self.index, &self.embedder) {
            (RetrievalIndex::Sparse(i), _) => Ok(i.search(query, k)),
            (RetrievalIndex::Dense(i), Some(e)) => Ok(i.search(e.as_ref(), query, k, self.lambda)?),
            (RetrievalIndex::Dense(_), None) => Err(RetrievalError::Config("dense retriever has no embedder".into())),
        }
    }
}

/// Adds each hit's summarized discussion (empty when there is none). Ids,
/// scores and ranks are left untouched.
pub fn attach_discussions(hits: Vec<RetrievalHit>, corpus: &Corpus) -> Result<Vec<RetrievalHit>, RetrievalError> {
    hits.into_iter()
        .map(|mut hit| {
            if corpus.get(&hit.doc_id).is_none() {
                return Err(RetrievalError::UnknownDoc(hit.doc_id));
            }
            let discussion = corpus.summary(&hit.doc_id).and_then(|s| s.summary_discussion.clone());
            hit.augmented_discussion = Some(discussion.unwrap_or_default());
            Ok(hit)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IncidentRecord, Timestamp};

    pub(crate) fn record(id: &str, title: &str, description: &str) -> IncidentRecord {
        IncidentRecord {
            id: id.into(),
            title: title.into(),
            description: description.into(),
            root_cause: None,
            comments: vec![],
            created_at: Timestamp::parse("2022-03-01T00:00:00Z").unwrap(),
            metadata: Default::default(),
        }
    }

    fn corpus() -> Corpus {
        let mut c = Corpus::from_records(vec![
            record("d1", "blob", "missing error"),
            record("d2", "network", "latency spike"),
            record("d3", "blob", "storage quota"),
        ])
        .unwrap();
        let mut s = SummarizedIncident::passthrough(c.get("d1").unwrap());
        s.summary_discussion = Some("checked logs".into());
        c.insert_summary(s).unwrap();
        c
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        for bad in [
            RetrievalConfig { k: 0, ..Default::default() },
            RetrievalConfig { k: 11, ..Default::default() },
            RetrievalConfig { mmr_lambda: 1.5, ..Default::default() },
            RetrievalConfig { bm25_b: -0.1, ..Default::default() },
            RetrievalConfig { bm25_k1: 0.0, ..Default::default() },
            RetrievalConfig { fields: vec![], ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(RetrievalError::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn config_reads_partial_toml() {
        let cfg: RetrievalConfig = toml::from_str("k = 2\n[embedder]\nprovider = \"hash\"\ndim = 8\nseed = 1\n").unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.total_budget, 10);
        assert_eq!(cfg.embedder, EmbedderConfig::Hash { dim: 8, seed: 1 });
    }

    #[test]
    fn sparse_build_covers_train_only() {
        let mut c = corpus();
        let split = crate::corpus::CorpusSplit {
            train: ["d1", "d2"].iter().map(|s| s.to_string()).collect(),
            eval: ["d3".to_string()].into(),
            test: Default::default(),
        };
        c.set_split(split).unwrap();
        let idx = build_index(&c, &RetrievalConfig::default(), IndexKind::Sparse, None).unwrap();
        assert_eq!(idx.doc_ids(), ["d1", "d2"]);
    }

    #[test]
    fn dense_needs_embedder() {
        let err = build_index(&corpus(), &RetrievalConfig::default(), IndexKind::Dense, None).unwrap_err();
        assert!(matches!(err, RetrievalError::Config(_)));
        let e = HashEmbedder::new(16, 0);
        let idx = build_index(&corpus(), &RetrievalConfig::default(), IndexKind::Dense, Some(&e)).unwrap();
        let RetrievalIndex::Dense(d) = idx else { panic!("dense expected") };
        assert_eq!(d.len(), 3);
        assert!(d.vectors().iter().all(|v| v.len() == 16));
    }

    #[test]
    fn empty_corpus() {
        let c = Corpus::default();
        for kind in [IndexKind::Sparse, IndexKind::Dense] {
            let r = Retriever::build(&c, &RetrievalConfig::default(), kind).unwrap();
            assert!(r.index().is_empty());
            assert!(r.search("blob", 3).unwrap().is_empty());
        }
    }

    #[test]
    fn augmentation_keeps_ranking() {
        let c = corpus();
        let r = Retriever::build(&c, &RetrievalConfig::default(), IndexKind::Sparse).unwrap();
        let plain = r.search("blob error", 2).unwrap();
        let augmented = attach_discussions(plain.clone(), &c).unwrap();
        assert_eq!(augmented[0].augmented_discussion.as_deref(), Some("checked logs"));
        assert_eq!(augmented[1].augmented_discussion.as_deref(), Some(""));
        for (a, p) in augmented.iter().zip(&plain) {
            assert_eq!((&a.doc_id, a.rank, a.score), (&p.doc_id, p.rank, p.score));
        }
        let unknown = vec![RetrievalHit::new("zz", 1.0, 1)];
        assert!(matches!(attach_discussions(unknown, &c), Err(RetrievalError::UnknownDoc(id)) if id == "zz"));
    }

    #[test]
    fn tie_break_by_id() {
        let hits = rank_hits(vec![("b", 1.0), ("a", 1.0), ("c", 2.0)], 3);
        let ids: Vec<&str> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }
}
