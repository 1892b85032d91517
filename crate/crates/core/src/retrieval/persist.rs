//! Index files: a CBOR body plus a JSON manifest, both inside the corpus
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IndexKind, RetrievalConfig, RetrievalError, RetrievalIndex};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub kind: IndexKind,
    pub documents: usize,
    pub config: RetrievalConfig,
    /// Hash of the corpus content the index was built from.
    pub corpus_hash: String,
}

/// (body, manifest) paths for an index of `kind` in `dir`.
pub fn index_paths(dir: &Path, kind: IndexKind) -> (PathBuf, PathBuf) {
    (dir.join(format!("index-{kind}.bin")), dir.join(format!("index-{kind}.json")))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.to_path_buf(), source }
}

pub fn save_index(
    dir: &Path,
    index: &RetrievalIndex,
    config: &RetrievalConfig,
    corpus_hash: &str,
) -> Result<IndexManifest, RetrievalError> {
    let (body_path, manifest_path) = index_paths(dir, index.kind());
    let mut body = Vec::new();
    ciborium::into_writer(index, &mut body)
        .map_err(|e| RetrievalError::Format { path: body_path.clone(), message: e.to_string() })?;
    fs::write(&body_path, body).map_err(io(&body_path))?;
    let manifest = IndexManifest {
        format_version: FORMAT_VERSION,
        kind: index.kind(),
        documents: index.len(),
        config: config.clone(),
        corpus_hash: corpus_hash.to_string(),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(io(&manifest_path))?;
    Ok(manifest)
}

pub fn load_index(dir: &Path, kind: IndexKind) -> Result<(IndexManifest, RetrievalIndex), RetrievalError> {
    let (body_path, manifest_path) = index_paths(dir, kind);
    let bytes = fs::read(&manifest_path).map_err(io(&manifest_path))?;
    let manifest: IndexManifest = serde_json::from_slice(&bytes)
        .map_err(|e| RetrievalError::Format { path: manifest_path.clone(), message: e.to_string() })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(RetrievalError::Version(manifest.format_version));
    }
    let body = fs::read(&body_path).map_err(io(&body_path))?;
    let index: RetrievalIndex = ciborium::from_reader(body.as_slice())
        .map_err(|e| RetrievalError::Format { path: body_path.clone(), message: e.to_string() })?;
    if index.kind() != manifest.kind || index.len() != manifest.documents {
        return Err(RetrievalError::Format {
            path: body_path,
            message: "index body does not match its manifest".into(),
        });
    }
    Ok((manifest, index))
}
