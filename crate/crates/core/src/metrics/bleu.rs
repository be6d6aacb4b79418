//! Sentence-level BLEU: clipped n-gram precision for n = 1..4, geometric
//! mean, brevity penalty, no smoothing.
//!
//! Tokenization follows the widely used "13a" scheme: symbols are split from
//! words, periods and commas are split unless they sit next to a digit, and
//! a dash after a digit is split off. Case is preserved.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::types::{is_blank, Metric, MetricScore, SentencePair};

pub const MAX_ORDER: usize = 4;

/// Identifies the tokenizer and smoothing in cache keys and manifests.
pub const BLEU_CONFIG: &str = "bleu/13a/order4/no-smoothing";

fn rules() -> &'static [(Regex, &'static str); 4] {
    static RULES: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RULES.get_or_init(|| {
        [
            // { | } ~ [ \ ] ^ _ ` space ! " # $ % & ( ) * + : ; < = > ? @ /
            (
                Regex::new(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40\x2F])").unwrap(),
                " $1 ",
            ),
            (Regex::new(r"([^0-9])([\.,])").unwrap(), "$1 $2 "),
            (Regex::new(r"([\.,])([^0-9])").unwrap(), " $1 $2"),
            (Regex::new(r"([0-9])(-)").unwrap(), "$1 $2 "),
        ]
    })
}

/// Splits `text` into BLEU tokens.
pub fn bleu_tokenize(text: &str) -> Result<Vec<String>> {
    if is_blank(text) {
        return Err(Error::EmptyText);
    }
    let mut line = text
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut line = format!(" {line} ");
    for (re, replacement) in rules() {
        line = re.replace_all(&line, *replacement).into_owned();
    }
    Ok(line.split_whitespace().map(str::to_string).collect())
}

/// Multiset of the n-grams of one order in a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramProfile<'a> {
    pub order: usize,
    pub counts: HashMap<&'a [String], usize>,
}

impl<'a> NgramProfile<'a> {
    pub fn new(tokens: &'a [String], order: usize) -> Self {
        assert!(order >= 1, "n-gram order starts at 1");
        let mut counts = HashMap::new();
        for gram in tokens.windows(order) {
            *counts.entry(gram).or_insert(0) += 1;
        }
        Self { order, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// `(clipped_matches, total)` for candidate n-grams of order `n`.
pub fn modified_precision(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = NgramProfile::new(candidate, n);
    let refs = NgramProfile::new(reference, n);
    let clipped = cand
        .counts
        .iter()
        .map(|(gram, &count)| count.min(refs.counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (clipped, cand.total())
}

pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len > reference_len {
        1.0
    } else if candidate_len == 0 {
        0.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// BLEU of a tokenized candidate against one tokenized reference.
pub fn bleu_from_tokens(candidate: &[String], reference: &[String]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let (clipped, total) = modified_precision(candidate, reference, n);
        if clipped == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln() / MAX_ORDER as f64;
    }
    brevity_penalty(candidate.len(), reference.len()) * log_sum.exp()
}

pub fn sentence_bleu(candidate_text: &str, reference_text: &str) -> Result<f64> {
    let candidate = bleu_tokenize(candidate_text)?;
    let reference = bleu_tokenize(reference_text)?;
    Ok(bleu_from_tokens(&candidate, &reference))
}

/// BLEU with `text_a` as reference and `text_b` as candidate.
pub fn bleu_score(pair: &SentencePair) -> Result<MetricScore> {
    let value = sentence_bleu(&pair.text_b, &pair.text_a)?;
    Ok(MetricScore::clamped(pair.id.clone(), Metric::Bleu, value, ""))
}
