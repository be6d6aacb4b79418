use serde::{Deserialize, Serialize};
use tokenizers::Encoding;

use super::bundle::{BundleKind, ModelBundle};
use crate::error::{Error, Result};
use crate::types::is_blank;

/// Token ids ready for a graph, plus the bookkeeping the metrics need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub token_ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub attention_mask: Vec<u32>,
    pub special_tokens: Vec<bool>,
    pub tokens: Vec<String>,
    /// Index of the first token belonging to the second text, for pair encodings.
    pub pair_boundary: Option<usize>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    fn from_encoding(encoding: &Encoding) -> Result<Self> {
        if encoding.is_empty() {
            return Err(Error::Tokenizer("tokenizer produced no tokens".into()));
        }
        let pair_boundary = encoding
            .get_sequence_ids()
            .iter()
            .position(|s| *s == Some(1));
        Ok(Self {
            token_ids: encoding.get_ids().to_vec(),
            type_ids: encoding.get_type_ids().to_vec(),
            attention_mask: encoding.get_attention_mask().to_vec(),
            special_tokens: encoding
                .get_special_tokens_mask()
                .iter()
                .map(|&m| m == 1)
                .collect(),
            tokens: encoding.get_tokens().to_vec(),
            pair_boundary,
        })
    }
}

/// Joint encoding of two texts with the model's separators, truncated
/// longest-first to the bundle's `max_len`.
pub fn tokenize_pair(bundle: &ModelBundle, text_a: &str, text_b: &str) -> Result<EncodedInput> {
    bundle.expect_kind(BundleKind::RegressionPair)?;
    if is_blank(text_a) || is_blank(text_b) {
        return Err(Error::EmptyText);
    }
    let encoding = bundle
        .tokenizer
        .encode((text_a, text_b), true)
        .map_err(|e| Error::Tokenizer(e.to_string()))?;
    EncodedInput::from_encoding(&encoding)
}

/// Encoding of a single text for an encoder bundle.
pub fn tokenize_text(bundle: &ModelBundle, text: &str) -> Result<EncodedInput> {
    bundle.expect_kind(BundleKind::Encoder)?;
    if is_blank(text) {
        return Err(Error::EmptyText);
    }
    let encoding = bundle
        .tokenizer
        .encode(text, true)
        .map_err(|e| Error::Tokenizer(e.to_string()))?;
    EncodedInput::from_encoding(&encoding)
}
