use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokenizers::{Tokenizer, TruncationDirection, TruncationParams, TruncationStrategy};

use super::fixture::FixtureGraph;
use super::onnx::OnnxGraph;
use crate::error::{Error, Result};

pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const CONFIG_FILE: &str = "bundle.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.txt";
pub const DEFAULT_GRAPH_FILE: &str = "model.onnx";
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    RegressionPair,
    Encoder,
}

impl BundleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BundleKind::RegressionPair => "regression_pair",
            BundleKind::Encoder => "encoder",
        }
    }
}

impl fmt::Display for BundleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    None,
}

/// Which graph the bundle's computation file is executed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Runtime {
    #[default]
    Onnx,
    Fixture,
}

/// Hidden layer used for token embeddings: `"last"` or a hidden-state index
/// (0 is the embedding layer output).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingLayer {
    #[default]
    Last,
    Index(usize),
}

impl EmbeddingLayer {
    /// Graph output carrying this layer's states.
    pub fn output_name(self) -> String {
        match self {
            EmbeddingLayer::Last => "last_hidden_state".to_string(),
            EmbeddingLayer::Index(k) => format!("hidden_state_{k}"),
        }
    }
}

impl Serialize for EmbeddingLayer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            EmbeddingLayer::Last => s.serialize_str("last"),
            EmbeddingLayer::Index(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for EmbeddingLayer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Index(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Index(k) => Ok(EmbeddingLayer::Index(k)),
            Repr::Name(s) if s == "last" => Ok(EmbeddingLayer::Last),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "embedding_layer must be \"last\" or an integer, got {s:?}"
            ))),
        }
    }
}

/// Contents of `bundle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub kind: BundleKind,
    pub max_len: usize,
    pub pooling: Pooling,
    pub output_scale: f64,
    #[serde(default)]
    pub rescale_baseline: Option<f64>,
    #[serde(default)]
    pub embedding_layer: EmbeddingLayer,
    #[serde(default = "default_graph")]
    pub graph: String,
    #[serde(default)]
    pub runtime: Runtime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opset: Option<u32>,
}

fn default_graph() -> String {
    DEFAULT_GRAPH_FILE.to_string()
}

impl BundleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedConfig(msg));
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        match self.kind {
            BundleKind::RegressionPair => {
                if self.pooling != Pooling::None {
                    return bad("regression_pair bundles use pooling \"none\"".into());
                }
                if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
                    return bad(format!("output_scale must be positive, got {}", self.output_scale));
                }
            }
            BundleKind::Encoder => {
                if self.pooling != Pooling::Mean {
                    return bad("encoder bundles use pooling \"mean\"".into());
                }
            }
        }
        if let Some(b) = self.rescale_baseline {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("rescale_baseline must lie in [0, 1), got {b}"));
            }
        }
        if self.graph.is_empty() || self.graph.contains(['/', '\\']) {
            return bad(format!("graph must be a plain file name, got {:?}", self.graph));
        }
        Ok(())
    }
}

/// Lowercase hex SHA-256 over the graph, tokenizer and config files, in that order.
pub fn compute_fingerprint(dir: &Path, graph_file: &str) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in [graph_file, TOKENIZER_FILE, CONFIG_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
            _ => Error::Io(e),
        })?;
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Writes `fingerprint.txt` for a bundle directory whose other files are in place.
pub fn write_fingerprint(dir: &Path) -> Result<String> {
    let config = read_config(dir)?;
    let fp = compute_fingerprint(dir, &config.graph)?;
    fs::write(dir.join(FINGERPRINT_FILE), format!("{fp}\n"))?;
    Ok(fp)
}

fn read_config(dir: &Path) -> Result<BundleConfig> {
    let path = dir.join(CONFIG_FILE);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
        _ => Error::Io(e),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::MalformedConfig(format!("{}: {e}", path.display())))
}

pub(crate) enum Engine {
    Fixture(FixtureGraph),
    Onnx(OnnxGraph),
}

/// A loaded, validated model bundle. Immutable once loaded; share it behind an `Arc`.
pub struct ModelBundle {
    dir: PathBuf,
    config: BundleConfig,
    fingerprint: String,
    pub(crate) tokenizer: Tokenizer,
    pub(crate) engine: Engine,
    batch_size: usize,
    inference_calls: AtomicU64,
}

impl fmt::Debug for ModelBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelBundle")
            .field("dir", &self.dir)
            .field("config", &self.config)
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

/// Loads a bundle directory, checking its layout, config invariants and fingerprint.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let config = read_config(dir)?;
    for name in [config.graph.as_str(), TOKENIZER_FILE, FINGERPRINT_FILE] {
        if !dir.join(name).is_file() {
            return Err(Error::MissingFile(dir.join(name)));
        }
    }
    config.validate()?;

    let recorded = fs::read_to_string(dir.join(FINGERPRINT_FILE))?
        .trim()
        .to_ascii_lowercase();
    let computed = compute_fingerprint(dir, &config.graph)?;
    if recorded != computed {
        return Err(Error::FingerprintMismatch { recorded, computed });
    }

    let mut tokenizer = Tokenizer::from_file(dir.join(TOKENIZER_FILE))
        .map_err(|e| Error::Tokenizer(e.to_string()))?;
    tokenizer
        .with_truncation(Some(TruncationParams {
            max_length: config.max_len,
            strategy: TruncationStrategy::LongestFirst,
            stride: 0,
            direction: TruncationDirection::Right,
        }))
        .map_err(|e| Error::Tokenizer(e.to_string()))?;
    tokenizer.with_padding(None);

    let graph_path = dir.join(&config.graph);
    let engine = match config.runtime {
        Runtime::Fixture => Engine::Fixture(FixtureGraph::load(&graph_path, config.kind)?),
        Runtime::Onnx => Engine::Onnx(OnnxGraph::load(&graph_path, &config)?),
    };

    Ok(ModelBundle {
        dir: dir.to_path_buf(),
        config,
        fingerprint: computed,
        tokenizer,
        engine,
        batch_size: DEFAULT_BATCH_SIZE,
        inference_calls: AtomicU64::new(0),
    })
}

impl ModelBundle {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &BundleConfig {
        &self.config
    }

    pub fn kind(&self) -> BundleKind {
        self.config.kind
    }

    pub fn max_len(&self) -> usize {
        self.config.max_len
    }

    pub fn output_scale(&self) -> f64 {
        self.config.output_scale
    }

    pub fn rescale_baseline(&self) -> Option<f64> {
        self.config.rescale_baseline
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Inputs per graph execution. Results do not depend on it beyond float noise.
    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Number of graph executions so far (one per batch).
    pub fn inference_calls(&self) -> u64 {
        self.inference_calls.load(Ordering::Relaxed)
    }

    pub(crate) fn count_inference(&self) {
        self.inference_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn expect_kind(&self, expected: BundleKind) -> Result<()> {
        if self.config.kind == expected {
            Ok(())
        } else {
            Err(Error::WrongBundleKind {
                expected: expected.as_str(),
                actual: self.config.kind.as_str(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: BundleKind, pooling: Pooling) -> BundleConfig {
        BundleConfig {
            kind,
            max_len: 16,
            pooling,
            output_scale: 5.0,
            rescale_baseline: None,
            embedding_layer: EmbeddingLayer::Last,
            graph: "model.onnx".into(),
            runtime: Runtime::Onnx,
            opset: None,
        }
    }

    #[test]
    fn kind_pooling_invariants() {
        assert!(config(BundleKind::RegressionPair, Pooling::None).validate().is_ok());
        assert!(config(BundleKind::RegressionPair, Pooling::Mean).validate().is_err());
        assert!(config(BundleKind::Encoder, Pooling::Mean).validate().is_ok());
        assert!(config(BundleKind::Encoder, Pooling::None).validate().is_err());
        let mut c = config(BundleKind::RegressionPair, Pooling::None);
        c.output_scale = 0.0;
        assert!(c.validate().is_err());
        let mut c = config(BundleKind::Encoder, Pooling::Mean);
        c.rescale_baseline = Some(1.0);
        assert!(c.validate().is_err());
        c.rescale_baseline = Some(0.83);
        assert!(c.validate().is_ok());
        c.max_len = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn embedding_layer_serde() {
        let c: BundleConfig = serde_json::from_str(
            r#"{"kind":"encoder","max_len":8,"pooling":"mean","output_scale":1.0,"embedding_layer":9}"#,
        )
        .unwrap();
        assert_eq!(c.embedding_layer, EmbeddingLayer::Index(9));
        assert_eq!(c.graph, "model.onnx");
        assert_eq!(c.runtime, Runtime::Onnx);
        assert_eq!(c.rescale_baseline, None);
        let c: BundleConfig = serde_json::from_str(
            r#"{"kind":"encoder","max_len":8,"pooling":"mean","output_scale":1.0,"embedding_layer":"last"}"#,
        )
        .unwrap();
        assert_eq!(c.embedding_layer, EmbeddingLayer::Last);
        assert!(serde_json::from_str::<BundleConfig>(
            r#"{"kind":"encoder","max_len":8,"pooling":"mean","output_scale":1.0,"embedding_layer":"first"}"#,
        )
        .is_err());
    }
}
