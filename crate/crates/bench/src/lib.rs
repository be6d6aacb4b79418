//! Workload generators for the benchmarks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stsscore::backend::fixture::write_fixture_bundle_set;
use stsscore::{Label, LabeledDataset, LabeledPair, SentencePair};

pub const VOCAB: &[&str] = &[
    "the", "a", "man", "woman", "child", "cat", "dog", "plays", "eats", "runs", "sits", "guitar", "piano", "food",
    "street", "house", "park", "red", "blue", "small", "large", "quickly", "slowly", "today", "near", "on", "in",
    "with", "and", "of",
];

/// Random sentence of `min..=max` words drawn from [`VOCAB`], with some punctuation.
pub fn sentence<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    let mut words: Vec<String> = (0..len)
        .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string())
        .collect();
    if rng.gen_bool(0.5) {
        if let Some(last) = words.last_mut() {
            last.push('.');
        }
    }
    words.join(" ")
}

/// `n` reproducible sentence pairs.
pub fn pairs(n: usize, seed: u64) -> Vec<SentencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SentencePair::new(format!("b{i}"), sentence(&mut rng, 4, 24), sentence(&mut rng, 4, 24)))
        .collect()
}

/// Score and label vectors of length `n` with mild correlation and ties.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
    let scores = labels
        .iter()
        .map(|l| ((0.3 * l + rng.gen_range(0.0..0.7)) * 1000.0).round() / 1000.0)
        .collect();
    (scores, labels)
}

/// A graded dataset of `n` pairs with labels in `[0, 5]`.
pub fn graded_dataset(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    LabeledDataset {
        name: stsscore::DatasetName::Stsb,
        split: "test".into(),
        pairs: pairs(n, seed)
            .into_iter()
            .map(|pair| LabeledPair {
                pair,
                label: Label::similarity((rng.gen_range(0..=25) as f64) / 5.0),
            })
            .collect(),
    }
}

/// Writes fixture `sts/`, `sbert/` and `bertscore/` bundles over [`VOCAB`].
pub fn fixture_bundles(root: &Path) -> stsscore::Result<()> {
    write_fixture_bundle_set(root, VOCAB)
}
