//! Embedding providers, the dense index and maximal marginal relevance.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{RetrievalHit, TIE_EPSILON};
use crate::text::tokenize;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EmbedError {
    #[error("embedding failed for {text:?}: {message}")]
    Transport { text: String, message: String },
    #[error("embedding failed for {text:?}: {message}")]
    Fatal { text: String, message: String },
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Transport { .. })
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
    fn dim(&self) -> usize;
    /// Identifies the vector space; stored with a dense index and checked at
    /// search time.
    fn id(&self) -> String;
}

/// Deterministic feature-hashing embedder: every token adds one to the
/// bucket picked by a seeded FNV-1a hash, and the result is L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn bucket(&self, token: &str) -> usize {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for byte in token.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        (h % self.dim as u64) as usize
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("hash:{}:{}", self.dim, self.seed)
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model: &str, dim: usize, api_key_env: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/embeddings", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            dim,
            api_key: std::env::var(api_key_env).ok(),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let transport = |message: String| EmbedError::Transport { text: text.to_string(), message };
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(json!({"model": self.model, "input": text}))
            .map_err(|e| transport(e.to_string()))?;
        let status = response.status().as_u16();
        let payload: Value = response.body_mut().read_json().map_err(|e| transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(transport(format!("HTTP {status}")));
        }
        let fatal = |message: String| EmbedError::Fatal { text: text.to_string(), message };
        if !(200..300).contains(&status) {
            return Err(fatal(format!("HTTP {status}: {payload}")));
        }
        let vector: Vec<f64> = payload["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| fatal("response has no embedding".into()))?
            .iter()
            .filter_map(Value::as_f64)
            .collect();
        if vector.len() != self.dim {
            return Err(fatal(format!("expected {} dimensions, got {}", self.dim, vector.len())));
        }
        Ok(vector)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.model, self.dim)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy MMR over `docs` (id, vector). The first pick is the most relevant
/// document; each later pick maximizes
/// `λ·cos(q, d) − (1 − λ)·max_s cos(d, s)` over the already selected `s`.
/// Ties go to the smaller id. Returns (position, relevance) in pick order.
pub fn mmr_select(query: &[f64], docs: &[(&str, &[f64])], k: usize, lambda: f64) -> Vec<(usize, f64)> {
    let relevance: Vec<f64> = docs.iter().map(|(_, v)| cosine(query, v)).collect();
    let mut chosen: Vec<usize> = Vec::new();
    let mut redundancy = vec![f64::NEG_INFINITY; docs.len()];
    while chosen.len() < k.min(docs.len()) {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..docs.len() {
            if chosen.contains(&i) {
                continue;
            }
            let value = if chosen.is_empty() {
                relevance[i]
            } else {
                lambda * relevance[i] - (1.0 - lambda) * redundancy[i]
            };
            let better = match best {
                None => true,
                Some((j, v)) => value > v + TIE_EPSILON || ((value - v).abs() <= TIE_EPSILON && docs[i].0 < docs[j].0),
            };
            if better {
                best = Some((i, value));
            }
        }
        let (pick, _) = best.expect("candidates remain");
        chosen.push(pick);
        for i in 0..docs.len() {
            redundancy[i] = redundancy[i].max(cosine(docs[i].1, docs[pick].1));
        }
    }
    chosen.into_iter().map(|i| (i, relevance[i])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    embedder_id: String,
    dim: usize,
    doc_ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DenseError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index was built with embedder {built}, searched with {given}")]
    EmbedderMismatch { built: String, given: String },
}

impl DenseIndex {
    pub fn build<'a>(
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
        embedder: &dyn Embedder,
    ) -> Result<Self, EmbedError> {
        let mut doc_ids = Vec::new();
        let mut vectors = Vec::new();
        for (id, text) in docs {
            doc_ids.push(id.to_string());
            vectors.push(embedder.embed(text)?);
        }
        Ok(Self { embedder_id: embedder.id(), dim: embedder.dim(), doc_ids, vectors })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// MMR search; hit scores are the query relevance of each pick.
    pub fn search(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        lambda: f64,
    ) -> Result<Vec<RetrievalHit>, DenseError> {
        if embedder.id() != self.embedder_id {
            return Err(DenseError::EmbedderMismatch { built: self.embedder_id.clone(), given: embedder.id() });
        }
        let q = embedder.embed(query)?;
        let docs: Vec<(&str, &[f64])> =
            self.doc_ids.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice)).collect();
        Ok(mmr_select(&q, &docs, k, lambda)
            .into_iter()
            .enumerate()
            .map(|(r, (pos, score))| RetrievalHit::new(&self.doc_ids[pos], score, r + 1))
            .collect())
    }
}
