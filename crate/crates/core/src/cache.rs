//! Content-addressed score cache.
//!
//! Each entry is one JSON file at `<root>/<hh>/<hh>/<digest>.json`, written to
//! a temporary file in the same directory and renamed into place so readers
//! never observe a partially written record.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::types::{Metric, MetricScore};

/// NFC normalisation only; case and whitespace are significant to the metrics.
pub fn canonicalize_text(text: &str) -> String {
    text.nfc().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    digest: [u8; 32],
}

impl CacheKey {
    pub fn new(
        metric: Metric,
        model_fingerprint: &str,
        text_a: &str,
        text_b: &str,
        config_hash: &str,
    ) -> Self {
        let mut hasher = Sha256::new();
        let a = canonicalize_text(text_a);
        let b = canonicalize_text(text_b);
        // length prefixes keep field boundaries unambiguous
        for field in [metric.as_str(), model_fingerprint, &a, &b, config_hash] {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        Self {
            digest: hasher.finalize().into(),
        }
    }

    pub fn hex(&self) -> String {
        hex::encode(self.digest)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    pair_id: String,
    metric: Metric,
    score: f64,
    raw: f64,
    model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Hit(MetricScore),
    Miss,
    /// The entry could not be decoded and has been removed.
    Corrupt(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ScoreCache {
    root: PathBuf,
}

impl ScoreCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, key: &CacheKey) -> PathBuf {
        let hex = key.hex();
        self.root
            .join(&hex[0..2])
            .join(&hex[2..4])
            .join(format!("{hex}.json"))
    }

    pub fn lookup(&self, key: &CacheKey) -> Result<Lookup> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Lookup::Miss),
            Err(source) => return Err(Error::CacheUnavailable { path, source }),
        };
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(e) if e.score.is_finite() && e.raw.is_finite() => Ok(Lookup::Hit(MetricScore {
                pair_id: e.pair_id,
                metric: e.metric,
                score: e.score,
                raw: e.raw,
                model_fingerprint: e.model_fingerprint,
            })),
            _ => {
                log::warn!("discarding corrupt cache entry {}", path.display());
                let _ = fs::remove_file(&path);
                Ok(Lookup::Corrupt(path))
            }
        }
    }

    /// A corrupt entry is discarded and reported as a miss.
    pub fn get(&self, key: &CacheKey) -> Result<Option<MetricScore>> {
        Ok(match self.lookup(key)? {
            Lookup::Hit(score) => Some(score),
            Lookup::Miss | Lookup::Corrupt(_) => None,
        })
    }

    pub fn put(&self, key: &CacheKey, score: &MetricScore) -> Result<()> {
        let path = self.entry_path(key);
        let dir = path.parent().expect("entry path has a parent");
        let unavailable = |source| Error::CacheUnavailable {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(unavailable)?;
        let entry = Entry {
            pair_id: score.pair_id.clone(),
            metric: score.metric,
            score: score.score,
            raw: score.raw,
            model_fingerprint: score.model_fingerprint.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(unavailable)?;
        serde_json::to_writer(&mut tmp, &entry)?;
        tmp.flush().map_err(unavailable)?;
        tmp.persist(&path).map_err(|e| unavailable(e.error))?;
        Ok(())
    }
}
