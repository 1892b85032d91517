//! On-disk corpus directory: raw store, summary store, split and manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Corpus, CorpusError, CorpusSplit, IncidentRecord, SummarizedIncident};
use crate::digest::sha256_hex;

pub const RAW_FILE: &str = "raw.jsonl";
pub const SUMMARY_FILE: &str = "summaries.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("unsupported corpus format version {0}")]
    Version(u32),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub eval: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub records: usize,
    pub summaries: usize,
    pub summarized_discussions: usize,
    pub split: SplitCounts,
    /// Fingerprint of the summarization configuration, if summaries exist.
    pub config_hash: Option<String>,
    /// SHA-256 over the raw and summary stores.
    pub corpus_hash: String,
}

/// Handle on a corpus directory.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), StoreError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("records serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&out).map_err(io_err(path))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

impl CorpusStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Writes every store file and the manifest, replacing previous content.
    pub fn save(&self, corpus: &Corpus, config_hash: Option<String>) -> Result<CorpusManifest, StoreError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        write_jsonl(&self.path(RAW_FILE), corpus.records().iter())?;
        write_jsonl(&self.path(SUMMARY_FILE), corpus.summaries())?;
        let split_path = self.path(SPLIT_FILE);
        let split = serde_json::to_vec_pretty(corpus.split()).expect("split serializes");
        fs::write(&split_path, split).map_err(io_err(&split_path))?;
        let manifest = CorpusManifest {
            format_version: FORMAT_VERSION,
            records: corpus.len(),
            summaries: corpus.summaries().count(),
            summarized_discussions: corpus.summaries().filter(|s| s.summary_discussion.is_some()).count(),
            split: SplitCounts {
                train: corpus.split().train.len(),
                eval: corpus.split().eval.len(),
                test: corpus.split().test.len(),
            },
            config_hash,
            corpus_hash: self.content_hash()?,
        };
        let manifest_path = self.path(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> Result<CorpusManifest, StoreError> {
        let path = self.path(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let manifest: CorpusManifest = serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::Parse { path: path.clone(), line: e.line(), message: e.to_string() })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(StoreError::Version(manifest.format_version));
        }
        Ok(manifest)
    }

    /// SHA-256 over the raw and summary store bytes.
    pub fn content_hash(&self) -> Result<String, StoreError> {
        let mut bytes = Vec::new();
        for file in [RAW_FILE, SUMMARY_FILE] {
            let path = self.path(file);
            bytes.extend(fs::read(&path).map_err(io_err(&path))?);
            bytes.push(0);
        }
        Ok(sha256_hex(&bytes))
    }

    pub fn load(&self) -> Result<Corpus, StoreError> {
        self.manifest()?;
        let records: Vec<IncidentRecord> = read_jsonl(&self.path(RAW_FILE))?;
        let mut corpus = Corpus::from_records(records)?;
        for summary in read_jsonl::<SummarizedIncident>(&self.path(SUMMARY_FILE))? {
            corpus.insert_summary(summary)?;
        }
        let split_path = self.path(SPLIT_FILE);
        let bytes = fs::read(&split_path).map_err(io_err(&split_path))?;
        let split: CorpusSplit = serde_json::from_slice(&bytes)
            .map_err(|e| StoreError::Parse { path: split_path, line: e.line(), message: e.to_string() })?;
        corpus.set_split(split).map_err(CorpusError::from)?;
        Ok(corpus)
    }
}
