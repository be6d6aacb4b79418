//! Independent reference implementations used as test oracles, plus random
//! workload generators. None of this calls into the library's own math.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use rand::Rng;
use stsscore::backend::fixture::{write_fixture_bundle, EncoderFixture, FixtureBundleSpec, RegressionFixture};

pub const WORDS: &[&str] = &[
    "the", "a", "cat", "dog", "sat", "ran", "on", "mat", "park", "red", "car", "big", "small", "blue", "house",
];

pub fn random_sentence<R: Rng>(rng: &mut R, min_len: usize, max_len: usize) -> String {
    let len = rng.gen_range(min_len..=max_len);
    (0..len)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// A candidate that shares a random amount of material with `reference`.
pub fn related_sentence<R: Rng>(rng: &mut R, reference: &str) -> String {
    let mut words: Vec<&str> = reference.split(' ').collect();
    let edits = rng.gen_range(0..=words.len());
    for _ in 0..edits {
        match rng.gen_range(0..3) {
            0 if words.len() > 1 => {
                let i = rng.gen_range(0..words.len());
                words.remove(i);
            }
            1 => {
                let i = rng.gen_range(0..=words.len());
                words.insert(i, WORDS[rng.gen_range(0..WORDS.len())]);
            }
            _ => {
                let i = rng.gen_range(0..words.len());
                words[i] = WORDS[rng.gen_range(0..WORDS.len())];
            }
        }
    }
    words.join(" ")
}

fn occurrences(tokens: &[&str], gram: &[&str]) -> usize {
    if tokens.len() < gram.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len())
        .filter(|&i| tokens[i..i + gram.len()] == *gram)
        .count()
}

/// Sentence BLEU on whitespace tokens, counting n-grams by linear scans.
pub fn oracle_bleu(candidate: &str, reference: &str) -> f64 {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    let mut product = 1.0f64;
    for n in 1..=4 {
        if c.len() < n {
            return 0.0;
        }
        let mut clipped = 0usize;
        let total = c.len() - n + 1;
        for i in 0..total {
            let gram = &c[i..i + n];
            let first = (0..i).all(|j| c[j..j + n] != *gram);
            if first {
                clipped += occurrences(&c, gram).min(occurrences(&r, gram));
            }
        }
        if clipped == 0 {
            return 0.0;
        }
        product *= clipped as f64 / total as f64;
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * product.powf(0.25)
}

/// Pearson correlation from the textbook definition.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Fractional ranks by counting: `1 + #less + (#equal - 1) / 2`.
pub fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

/// AUC as the exact probability that a random positive outscores a random
/// negative, ties counting one half.
pub fn oracle_auc(scores: &[f64], labels: &[f64]) -> Ratio<i128> {
    let mut doubled_wins = 0i128;
    let mut pairs = 0i128;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1.0 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0.0 {
                continue;
            }
            pairs += 1;
            doubled_wins += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    Ratio::new(doubled_wins, 2 * pairs)
}

pub fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Greedy matching by enumerating every token pair: `(precision, recall, f1)`.
pub fn oracle_greedy(reference: &[Vec<f64>], candidate: &[Vec<f64>]) -> (f64, f64, f64) {
    let mut recall = 0.0;
    for r in reference {
        let mut best = f64::NEG_INFINITY;
        for c in candidate {
            best = best.max(oracle_cosine(r, c));
        }
        recall += best;
    }
    recall /= reference.len() as f64;
    let mut precision = 0.0;
    for c in candidate {
        let mut best = f64::NEG_INFINITY;
        for r in reference {
            best = best.max(oracle_cosine(r, c));
        }
        precision += best;
    }
    precision /= candidate.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Random vectors, one per word, some pointing away from each other.
pub fn random_word_vectors<R: Rng>(rng: &mut R, dim: usize) -> BTreeMap<String, Vec<f64>> {
    WORDS
        .iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (w.to_string(), v)
        })
        .collect()
}

pub fn write_encoder(dir: &Path, vectors: BTreeMap<String, Vec<f64>>, dim: usize) {
    write_fixture_bundle(dir, &FixtureBundleSpec::encoder(EncoderFixture { dim, vectors }, WORDS)).unwrap();
}

pub fn write_hash_regression(dir: &Path, low: f64, high: f64) {
    write_fixture_bundle(dir, &FixtureBundleSpec::regression(RegressionFixture::Hash { low, high }, WORDS))
        .unwrap();
}
