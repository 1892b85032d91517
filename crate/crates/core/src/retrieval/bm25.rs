//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{rank_hits, RetrievalHit};
use crate::text::tokenize;

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`; never negative, so a term that
/// occurs in most documents still counts a little instead of penalizing.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lens: Vec<usize>,
    avg_len: f64,
    /// term -> (document position, term frequency), positions ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl Bm25Index {
    /// `docs` must have unique ids; the caller guarantees it.
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>, params: Bm25Params) -> Self {
        let mut doc_ids = Vec::new();
        let mut doc_lens = Vec::new();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (pos, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pos as u32, count));
            }
            doc_ids.push(id.to_string());
            doc_lens.push(tokens.len());
        }
        let total: usize = doc_lens.iter().sum();
        let avg_len = if doc_ids.is_empty() { 0.0 } else { total as f64 / doc_ids.len() as f64 };
        Self { params, doc_ids, doc_lens, avg_len, postings }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_len(&self, id: &str) -> Option<usize> {
        self.position(id).map(|p| self.doc_lens[p])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    /// BM25 score of every document containing at least one distinct query
    /// term, by document position.
    pub fn scores(&self, query: &str) -> BTreeMap<usize, f64> {
        let Bm25Params { k1, b } = self.params;
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let w = idf(self.len(), list.len());
            for &(pos, tf) in list {
                let tf = tf as f64;
                let norm = 1.0 - b + b * self.doc_lens[pos as usize] as f64 / self.avg_len;
                *acc.entry(pos as usize).or_default() += w * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        acc
    }

    /// Top `k` documents by score, ties by id ascending. Documents sharing no
    /// term with the query are never returned.
    pub fn search(&self, query: &str, k: usize) -> Vec<RetrievalHit> {
        let scored = self
            .scores(query)
            .into_iter()
            .map(|(pos, s)| (self.doc_ids[pos].as_str(), s))
            .collect();
        rank_hits(scored, k)
    }
}
