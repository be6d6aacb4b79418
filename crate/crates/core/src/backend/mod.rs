//! Inference layer: turns texts into regression logits or token embeddings.
//!
//! Real bundles execute an ONNX graph; fixture bundles (see [`fixture`]) run
//! a deterministic rule so the whole pipeline can be exercised without
//! model weights.

mod bundle;
pub mod fixture;
mod onnx;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use bundle::{
    compute_fingerprint, load_bundle, write_fingerprint, BundleConfig, BundleKind, EmbeddingLayer,
    ModelBundle, Pooling, Runtime, CONFIG_FILE, DEFAULT_BATCH_SIZE, DEFAULT_GRAPH_FILE,
    FINGERPRINT_FILE, TOKENIZER_FILE,
};
pub use tokenize::{tokenize_pair, tokenize_text, EncodedInput};

use bundle::Engine;
use crate::error::{Error, Result};

/// Token-level vectors for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbeddings {
    pub vectors: Vec<Vec<f64>>,
    pub mask: Vec<u32>,
    pub special_token_flags: Vec<bool>,
    /// Token ids, kept for optional IDF weighting.
    pub token_ids: Vec<u32>,
}

impl TokenEmbeddings {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Rows that take part in pooling and matching.
    pub fn eligible(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.mask[i] == 1 && !self.special_token_flags[i])
    }

    /// Embeddings built directly from vectors, all rows eligible.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Self {
        let n = vectors.len();
        Self {
            vectors,
            mask: vec![1; n],
            special_token_flags: vec![false; n],
            token_ids: (0..n as u32).collect(),
        }
    }
}

impl ModelBundle {
    fn pad_id(&self) -> u32 {
        ["[PAD]", "<pad>"]
            .iter()
            .find_map(|t| self.tokenizer.token_to_id(t))
            .unwrap_or(0)
    }
}

/// Raw regression output (the logit) for one pair encoding.
pub fn run_regression(bundle: &ModelBundle, input: &EncodedInput) -> Result<f64> {
    Ok(run_regression_batch(bundle, std::slice::from_ref(input))?[0])
}

/// Logits for many encodings, executed in batches of `bundle.batch_size()`.
pub fn run_regression_batch(bundle: &ModelBundle, inputs: &[EncodedInput]) -> Result<Vec<f64>> {
    bundle.expect_kind(BundleKind::RegressionPair)?;
    let mut logits = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(bundle.batch_size()) {
        bundle.count_inference();
        match &bundle.engine {
            Engine::Fixture(graph) => {
                for input in chunk {
                    logits.push(graph.regress(input)?);
                }
            }
            Engine::Onnx(graph) => logits.extend(graph.regress(chunk, bundle.pad_id())?),
        }
    }
    if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
        return Err(Error::Inference(format!("graph produced a non-finite logit {bad}")));
    }
    Ok(logits)
}

/// Per-token embeddings of one text from the bundle's configured layer.
pub fn encode_tokens(bundle: &ModelBundle, text: &str) -> Result<TokenEmbeddings> {
    Ok(encode_tokens_batch(bundle, &[text])?.remove(0))
}

pub fn encode_tokens_batch(bundle: &ModelBundle, texts: &[&str]) -> Result<Vec<TokenEmbeddings>> {
    bundle.expect_kind(BundleKind::Encoder)?;
    let inputs = texts
        .iter()
        .map(|t| tokenize_text(bundle, t))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(bundle.batch_size()) {
        bundle.count_inference();
        let states = match &bundle.engine {
            Engine::Fixture(graph) => chunk.iter().map(|i| graph.embed(i)).collect::<Result<Vec<_>>>()?,
            Engine::Onnx(graph) => graph.hidden_states(chunk, bundle.pad_id())?,
        };
        for (input, vectors) in chunk.iter().zip(states) {
            if vectors.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Inference("graph produced a non-finite embedding".into()));
            }
            out.push(TokenEmbeddings {
                vectors,
                mask: input.attention_mask.clone(),
                special_token_flags: input.special_tokens.clone(),
                token_ids: input.token_ids.clone(),
            });
        }
    }
    Ok(out)
}

/// Arithmetic mean of the rows that are unmasked and not special tokens.
pub fn mean_pool(emb: &TokenEmbeddings) -> Result<Vec<f64>> {
    let mut count = 0usize;
    let mut sum: Vec<f64> = Vec::new();
    for i in emb.eligible() {
        let row = &emb.vectors[i];
        if sum.is_empty() {
            sum = vec![0.0; row.len()];
        } else if row.len() != sum.len() {
            return Err(Error::DimensionMismatch(sum.len(), row.len()));
        }
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::AllTokensExcluded);
    }
    let n = count as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}
