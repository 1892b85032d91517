//! Knowledge base articles and the chunked vector store over them.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::{DenseIndex, EmbedError, Embedder};
use crate::text::overlapping_windows;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbaDocument {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub linked_incident_types: Vec<String>,
}

#[derive(Debug, Error)]
pub enum KbaError {
    #[error("KBA {0} has an empty body")]
    EmptyBody(String),
    #[error("duplicate KBA id {0}")]
    Duplicate(String),
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl KbaDocument {
    pub fn validate(&self) -> Result<(), KbaError> {
        if self.body.trim().is_empty() {
            return Err(KbaError::EmptyBody(self.id.clone()));
        }
        Ok(())
    }

    /// Reads every `*.toml` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Vec<KbaDocument>, KbaError> {
        let read_err = |path: &Path, e: &dyn std::fmt::Display| KbaError::Read { path: path.into(), message: e.to_string() };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| read_err(dir, &e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| read_err(p, &e))?;
                let doc: KbaDocument = toml::from_str(&text).map_err(|e| read_err(p, &e))?;
                doc.validate()?;
                Ok(doc)
            })
            .collect()
    }
}

/// KBA chunks embedded for similarity search. Counts its searches so callers
/// can check when retrieval was bypassed.
pub struct KbaStore {
    docs: Vec<KbaDocument>,
    /// (document position, chunk text)
    chunks: Vec<(usize, String)>,
    index: DenseIndex,
    embedder: Arc<dyn Embedder>,
    searches: AtomicUsize,
}

impl std::fmt::Debug for KbaStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KbaStore")
            .field("docs", &self.docs.len())
            .field("chunks", &self.chunks.len())
            .field("searches", &self.retrieval_calls())
            .finish()
    }
}

impl KbaStore {
    /// Splits every body into windows of `chunk_tokens` tokens overlapping by
    /// `overlap` and embeds them.
    pub fn build(
        docs: Vec<KbaDocument>,
        embedder: Arc<dyn Embedder>,
        chunk_tokens: usize,
        overlap: usize,
    ) -> Result<Self, KbaError> {
        let mut chunks = Vec::new();
        for (i, doc) in docs.iter().enumerate() {
            doc.validate()?;
            if docs[..i].iter().any(|d| d.id == doc.id) {
                return Err(KbaError::Duplicate(doc.id.clone()));
            }
            for window in overlapping_windows(&doc.body, chunk_tokens, overlap) {
                chunks.push((i, format!("{}\n{}", doc.title, window)));
            }
        }
        let ids: Vec<String> = (0..chunks.len()).map(|i| format!("{i:06}")).collect();
        let index = DenseIndex::build(ids.iter().map(String::as_str).zip(chunks.iter().map(|c| c.1.as_str())), embedder.as_ref())?;
        Ok(Self { docs, chunks, index, embedder, searches: AtomicUsize::new(0) })
    }

    pub fn empty(embedder: Arc<dyn Embedder>) -> Self {
        Self::build(Vec::new(), embedder, 200, 40).expect("empty store builds")
    }

    pub fn docs(&self) -> &[KbaDocument] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&KbaDocument> {
        self.docs.iter().find(|d| d.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn retrieval_calls(&self) -> usize {
        self.searches.load(Ordering::SeqCst)
    }

    /// The `n` chunks most similar to `query`, as (KBA, chunk text).
    pub fn search(&self, query: &str, n: usize) -> Result<Vec<(&KbaDocument, &str)>, EmbedError> {
        self.searches.fetch_add(1, Ordering::SeqCst);
        let hits = self
            .index
            .search(self.embedder.as_ref(), query, n, 1.0)
            .map_err(|e| match e {
                crate::retrieval::DenseError::Embed(e) => e,
                other => EmbedError::Fatal { text: query.into(), message: other.to_string() },
            })?;
        Ok(hits
            .iter()
            .map(|h| {
                let (doc, text) = &self.chunks[h.doc_id.parse::<usize>().expect("chunk ids are positions")];
                (&self.docs[*doc], text.as_str())
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashEmbedder;

    fn kba(id: &str, title: &str, body: &str) -> KbaDocument {
        KbaDocument { id: id.into(), title: title.into(), body: body.into(), linked_incident_types: vec![] }
    }

    #[test]
    fn store_search_counts_calls() {
        let docs = vec![
            kba("k1", "Setting drift", "Query the settings table on cluster cfg-east to find drifted clusters."),
            kba("k2", "Certificate rotation", "Renew the certificate with the rotation job."),
        ];
        let store = KbaStore::build(docs, Arc::new(HashEmbedder::new(128, 5)), 200, 40).unwrap();
        assert_eq!(store.retrieval_calls(), 0);
        let hits = store.search("settings table drifted clusters", 1).unwrap();
        assert_eq!(hits[0].0.id, "k1");
        assert_eq!(store.retrieval_calls(), 1);
    }

    #[test]
    fn validation() {
        let e = Arc::new(HashEmbedder::new(8, 0));
        assert!(matches!(KbaStore::build(vec![kba("k", "t", " ")], e.clone(), 10, 2), Err(KbaError::EmptyBody(_))));
        let dup = vec![kba("k", "t", "a"), kba("k", "t", "b")];
        assert!(matches!(KbaStore::build(dup, e, 10, 2), Err(KbaError::Duplicate(_))));
    }

    #[test]
    fn load_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.toml"), "id = \"b\"\ntitle = \"B\"\nbody = \"second\"\n").unwrap();
        std::fs::write(dir.path().join("a.toml"), "id = \"a\"\ntitle = \"A\"\nbody = \"first\"\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let docs = KbaDocument::load_dir(dir.path()).unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }
}
