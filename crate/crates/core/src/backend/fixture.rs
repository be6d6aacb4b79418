//! Deterministic stand-in graphs that need no model runtime.
//!
//! A fixture bundle has the same on-disk layout as a real one; its graph file
//! is a small JSON document describing the behaviour instead of an ONNX graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::bundle::{
    write_fingerprint, BundleConfig, BundleKind, EmbeddingLayer, Pooling, Runtime, CONFIG_FILE,
    TOKENIZER_FILE,
};
use super::tokenize::EncodedInput;
use crate::error::{Error, Result};

pub const FIXTURE_GRAPH_FILE: &str = "fixture.json";
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegressionFixture {
    /// Same logit for every input.
    Constant { logit: f64 },
    /// Logit drawn uniformly from `[low, high)` by hashing the token ids.
    Hash { low: f64, high: f64 },
    /// `scale` times the Jaccard overlap of the two texts' token sets.
    Overlap { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderFixture {
    pub dim: usize,
    /// Per-token vectors; tokens not listed map to basis vector `id mod dim`.
    #[serde(default)]
    pub vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureGraph {
    Regression(RegressionFixture),
    Encoder(EncoderFixture),
}

impl FixtureGraph {
    pub(crate) fn load(path: &Path, kind: BundleKind) -> Result<Self> {
        let graph: FixtureGraph = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| Error::MalformedConfig(format!("{}: {e}", path.display())))?;
        graph.check(kind)?;
        Ok(graph)
    }

    fn check(&self, kind: BundleKind) -> Result<()> {
        match (self, kind) {
            (FixtureGraph::Regression(_), BundleKind::RegressionPair) => Ok(()),
            (FixtureGraph::Encoder(e), BundleKind::Encoder) => {
                if e.dim == 0 {
                    return Err(Error::MalformedConfig("fixture encoder dim must be positive".into()));
                }
                match e.vectors.iter().find(|(_, v)| v.len() != e.dim || v.iter().any(|x| !x.is_finite())) {
                    Some((tok, _)) => Err(Error::MalformedConfig(format!(
                        "fixture vector for {tok:?} must have {} finite components",
                        e.dim
                    ))),
                    None => Ok(()),
                }
            }
            _ => Err(Error::MalformedConfig(format!(
                "fixture graph does not match bundle kind {kind}"
            ))),
        }
    }

    pub(crate) fn regress(&self, input: &EncodedInput) -> Result<f64> {
        let FixtureGraph::Regression(fixture) = self else {
            return Err(Error::Inference("fixture graph is not a regression head".into()));
        };
        Ok(match *fixture {
            RegressionFixture::Constant { logit } => logit,
            RegressionFixture::Hash { low, high } => {
                let mut hasher = Sha256::new();
                for id in &input.token_ids {
                    hasher.update(id.to_le_bytes());
                }
                let digest = hasher.finalize();
                let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
                let unit = (word >> 11) as f64 / (1u64 << 53) as f64;
                low + unit * (high - low)
            }
            RegressionFixture::Overlap { scale } => {
                let boundary = input.pair_boundary.unwrap_or(input.len());
                let content = |range: std::ops::Range<usize>| -> BTreeSet<u32> {
                    range
                        .filter(|&i| !input.special_tokens[i] && input.attention_mask[i] == 1)
                        .map(|i| input.token_ids[i])
                        .collect()
                };
                let a = content(0..boundary);
                let b = content(boundary..input.len());
                let union = a.union(&b).count();
                if union == 0 {
                    0.0
                } else {
                    scale * a.intersection(&b).count() as f64 / union as f64
                }
            }
        })
    }

    pub(crate) fn embed(&self, input: &EncodedInput) -> Result<Vec<Vec<f64>>> {
        let FixtureGraph::Encoder(fixture) = self else {
            return Err(Error::Inference("fixture graph is not an encoder".into()));
        };
        Ok(input
            .token_ids
            .iter()
            .zip(&input.tokens)
            .map(|(&id, token)| match fixture.vectors.get(token) {
                Some(v) => v.clone(),
                None => {
                    let mut v = vec![0.0; fixture.dim];
                    v[id as usize % fixture.dim] = 1.0;
                    v
                }
            })
            .collect())
    }
}

/// Description of a fixture bundle to write to disk.
#[derive(Debug, Clone)]
pub struct FixtureBundleSpec {
    pub graph: FixtureGraph,
    /// Words known to the word-level tokenizer; anything else becomes `[UNK]`.
    pub vocab: Vec<String>,
    pub max_len: usize,
    pub output_scale: f64,
    pub rescale_baseline: Option<f64>,
}

impl FixtureBundleSpec {
    pub fn regression(fixture: RegressionFixture, vocab: &[&str]) -> Self {
        Self {
            graph: FixtureGraph::Regression(fixture),
            vocab: vocab.iter().map(|s| s.to_string()).collect(),
            max_len: 128,
            output_scale: 5.0,
            rescale_baseline: None,
        }
    }

    pub fn encoder(fixture: EncoderFixture, vocab: &[&str]) -> Self {
        Self {
            graph: FixtureGraph::Encoder(fixture),
            vocab: vocab.iter().map(|s| s.to_string()).collect(),
            max_len: 128,
            output_scale: 1.0,
            rescale_baseline: None,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn with_rescale_baseline(mut self, baseline: f64) -> Self {
        self.rescale_baseline = Some(baseline);
        self
    }

    fn kind(&self) -> BundleKind {
        match self.graph {
            FixtureGraph::Regression(_) => BundleKind::RegressionPair,
            FixtureGraph::Encoder(_) => BundleKind::Encoder,
        }
    }
}

/// Word-level tokenizer with BERT-style `[CLS] a [SEP] b [SEP]` framing.
fn tokenizer_json(vocab: &[String]) -> serde_json::Value {
    let mut ids = serde_json::Map::new();
    for (i, tok) in SPECIAL_TOKENS.iter().enumerate() {
        ids.insert(tok.to_string(), json!(i));
    }
    for word in vocab {
        if !ids.contains_key(word) {
            let next = ids.len();
            ids.insert(word.clone(), json!(next));
        }
    }
    let added: Vec<_> = SPECIAL_TOKENS
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            json!({"id": i, "content": tok, "single_word": false, "lstrip": false,
                   "rstrip": false, "normalized": false, "special": true})
        })
        .collect();
    let special = |tok: &str, type_id: u32| json!({"SpecialToken": {"id": tok, "type_id": type_id}});
    let seq = |id: &str, type_id: u32| json!({"Sequence": {"id": id, "type_id": type_id}});
    json!({
        "version": "1.0",
        "truncation": null,
        "padding": null,
        "added_tokens": added,
        "normalizer": null,
        "pre_tokenizer": {"type": "Whitespace"},
        "post_processor": {
            "type": "TemplateProcessing",
            "single": [special("[CLS]", 0), seq("A", 0), special("[SEP]", 0)],
            "pair": [special("[CLS]", 0), seq("A", 0), special("[SEP]", 0), seq("B", 1), special("[SEP]", 1)],
            "special_tokens": {
                "[CLS]": {"id": "[CLS]", "ids": [2], "tokens": ["[CLS]"]},
                "[SEP]": {"id": "[SEP]", "ids": [3], "tokens": ["[SEP]"]}
            }
        },
        "decoder": null,
        "model": {"type": "WordLevel", "vocab": ids, "unk_token": "[UNK]"}
    })
}

/// Writes a complete fixture bundle (graph, tokenizer, config, fingerprint) into `dir`.
pub fn write_fixture_bundle(dir: &Path, spec: &FixtureBundleSpec) -> Result<()> {
    spec.graph.check(spec.kind())?;
    fs::create_dir_all(dir)?;
    let kind = spec.kind();
    let config = BundleConfig {
        kind,
        max_len: spec.max_len,
        pooling: match kind {
            BundleKind::RegressionPair => Pooling::None,
            BundleKind::Encoder => Pooling::Mean,
        },
        output_scale: spec.output_scale,
        rescale_baseline: spec.rescale_baseline,
        embedding_layer: EmbeddingLayer::Last,
        graph: FIXTURE_GRAPH_FILE.to_string(),
        runtime: Runtime::Fixture,
        opset: None,
    };
    config.validate()?;
    fs::write(dir.join(FIXTURE_GRAPH_FILE), serde_json::to_vec_pretty(&spec.graph)?)?;
    fs::write(dir.join(TOKENIZER_FILE), serde_json::to_vec_pretty(&tokenizer_json(&spec.vocab))?)?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(&config)?)?;
    write_fingerprint(dir)?;
    Ok(())
}

/// Writes `sts/`, `sbert/` and `bertscore/` fixture bundles under `root`,
/// the layout the benchmark runner expects. The regression bundle scores
/// token overlap; the encoders map every word to its own basis vector.
pub fn write_fixture_bundle_set(root: &Path, vocab: &[&str]) -> Result<()> {
    let dim = vocab.len() + SPECIAL_TOKENS.len();
    write_fixture_bundle(
        &root.join("sts"),
        &FixtureBundleSpec::regression(RegressionFixture::Overlap { scale: 5.0 }, vocab),
    )?;
    for name in ["sbert", "bertscore"] {
        write_fixture_bundle(
            &root.join(name),
            &FixtureBundleSpec::encoder(
                EncoderFixture {
                    dim,
                    vectors: BTreeMap::new(),
                },
                vocab,
            ),
        )?;
    }
    Ok(())
}
