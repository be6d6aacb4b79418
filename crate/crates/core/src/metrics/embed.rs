//! Embedding-based metrics: pooled sentence cosine and greedy token matching.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{encode_tokens_batch, mean_pool, tokenize_text, BundleKind, ModelBundle, TokenEmbeddings};
use crate::error::{Error, Result};
use crate::types::{clamp_unit, Metric, MetricScore, SentencePair};

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if !(nu > 0.0 && nv > 0.0 && nu.is_finite() && nv.is_finite() && dot.is_finite()) {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine of the mean-pooled token embeddings of the two texts.
pub fn sbert_from_embeddings(
    pair_id: &str,
    a: &TokenEmbeddings,
    b: &TokenEmbeddings,
    fingerprint: &str,
) -> Result<MetricScore> {
    let raw = cosine(&mean_pool(a)?, &mean_pool(b)?)?;
    Ok(MetricScore::clamped(pair_id, Metric::Sbert, raw, fingerprint))
}

pub fn sbert_score(bundle: &ModelBundle, pair: &SentencePair) -> Result<MetricScore> {
    bundle.expect_kind(BundleKind::Encoder)?;
    let emb = encode_tokens_batch(bundle, &[&pair.text_a, &pair.text_b])?;
    sbert_from_embeddings(&pair.id, &emb[0], &emb[1], bundle.fingerprint())
}

/// Inverse document frequencies over a reference corpus:
/// `ln((M + 1) / (df + 1))` for a corpus of `M` texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    weights: BTreeMap<u32, f64>,
    unseen: f64,
}

impl IdfTable {
    pub fn from_token_sets<I, S>(documents: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = u32>,
    {
        let mut df: BTreeMap<u32, usize> = BTreeMap::new();
        let mut m = 0usize;
        for doc in documents {
            m += 1;
            for id in doc.into_iter().collect::<HashSet<_>>() {
                *df.entry(id).or_default() += 1;
            }
        }
        let total = (m + 1) as f64;
        Self {
            weights: df.into_iter().map(|(id, d)| (id, (total / (d + 1) as f64).ln())).collect(),
            unseen: total.ln(),
        }
    }

    /// Builds the table from the texts' non-special tokens under the bundle's tokenizer.
    pub fn from_references(bundle: &ModelBundle, texts: &[&str]) -> Result<Self> {
        let docs = texts
            .iter()
            .map(|t| {
                let enc = tokenize_text(bundle, t)?;
                Ok(enc
                    .token_ids
                    .iter()
                    .zip(&enc.special_tokens)
                    .filter(|(_, &special)| !special)
                    .map(|(&id, _)| id)
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_token_sets(docs))
    }

    pub fn weight(&self, token_id: u32) -> f64 {
        self.weights.get(&token_id).copied().unwrap_or(self.unseen)
    }

    /// Short digest identifying the table in cache keys.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (id, w) in &self.weights {
            h.update(id.to_le_bytes());
            h.update(w.to_le_bytes());
        }
        h.update(self.unseen.to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, Default)]
pub struct TokenMatchConfig {
    /// IDF importance weights; uniform weighting when `None`.
    pub idf: Option<IdfTable>,
}

impl TokenMatchConfig {
    /// Everything besides the bundle that changes the score.
    pub fn config_id(&self, bundle: &ModelBundle) -> String {
        format!(
            "tokenmatch/greedy/layer={}/baseline={}/idf={}",
            bundle.config().embedding_layer.output_name(),
            bundle
                .rescale_baseline()
                .map_or_else(|| "none".to_string(), |b| format!("{b:?}")),
            self.idf.as_ref().map_or_else(|| "off".to_string(), IdfTable::digest),
        )
    }
}

/// Greedy token matching outcome. `precision`, `recall` and `f1` are
/// reported after optional baseline rescaling, `f1` is also clamped to
/// `[0, 1]`; `raw_f1` is the harmonic mean before either step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub raw_f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn unit_rows(emb: &TokenEmbeddings) -> Result<Vec<(usize, Vec<f64>)>> {
    let rows: Vec<_> = emb
        .eligible()
        .map(|i| {
            let v = &emb.vectors[i];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                Ok((i, v.iter().map(|x| x / norm).collect()))
            } else {
                Err(Error::ZeroVector)
            }
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::AllTokensExcluded);
    }
    Ok(rows)
}

/// Raw `(precision, recall)` of greedy cosine matching.
///
/// Recall averages, over reference tokens, the best similarity to any
/// candidate token; precision does the same from the candidate side.
pub fn greedy_match(
    reference: &TokenEmbeddings,
    candidate: &TokenEmbeddings,
    idf: Option<&IdfTable>,
) -> Result<(f64, f64)> {
    let refs = unit_rows(reference)?;
    let cands = unit_rows(candidate)?;
    if refs[0].1.len() != cands[0].1.len() {
        return Err(Error::DimensionMismatch(refs[0].1.len(), cands[0].1.len()));
    }
    let sim: Vec<Vec<f64>> = refs
        .iter()
        .map(|(_, r)| {
            cands
                .iter()
                .map(|(_, c)| r.iter().zip(c).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();

    let weight = |emb: &TokenEmbeddings, i: usize| idf.map_or(1.0, |t| t.weight(emb.token_ids[i]));
    let weighted_mean = |pairs: Vec<(f64, f64)>| -> f64 {
        let total: f64 = pairs.iter().map(|(w, _)| w).sum();
        if total > 0.0 {
            pairs.iter().map(|(w, s)| w * s).sum::<f64>() / total
        } else {
            pairs.iter().map(|(_, s)| s).sum::<f64>() / pairs.len() as f64
        }
    };

    let recall = weighted_mean(
        refs.iter()
            .enumerate()
            .map(|(i, (row, _))| {
                let best = sim[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (weight(reference, *row), best)
            })
            .collect(),
    );
    let precision = weighted_mean(
        cands
            .iter()
            .enumerate()
            .map(|(j, (row, _))| {
                let best = sim.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                (weight(candidate, *row), best)
            })
            .collect(),
    );
    Ok((precision, recall))
}

/// Combines raw precision and recall into a report, applying
/// `x -> (x - b) / (1 - b)` to each of P, R and F1 when a baseline is given.
pub fn match_report(precision: f64, recall: f64, baseline: Option<f64>) -> MatchReport {
    let raw_f1 = harmonic(precision, recall);
    let rescale = |x: f64| baseline.map_or(x, |b| (x - b) / (1.0 - b));
    MatchReport {
        precision: rescale(precision),
        recall: rescale(recall),
        f1: clamp_unit(rescale(raw_f1)),
        raw_f1,
    }
}

/// Token-matching score with `reference` (text_a) and `candidate` (text_b) already embedded.
pub fn bertscore_from_embeddings(
    pair_id: &str,
    reference: &TokenEmbeddings,
    candidate: &TokenEmbeddings,
    baseline: Option<f64>,
    config: &TokenMatchConfig,
    fingerprint: &str,
) -> Result<(MetricScore, MatchReport)> {
    let (p, r) = greedy_match(reference, candidate, config.idf.as_ref())?;
    let report = match_report(p, r, baseline);
    let pre_clamp = baseline.map_or(report.raw_f1, |b| (report.raw_f1 - b) / (1.0 - b));
    let score = MetricScore::clamped(pair_id, Metric::Bertscore, pre_clamp, fingerprint);
    Ok((score, report))
}

pub fn token_match_score(
    bundle: &ModelBundle,
    pair: &SentencePair,
    config: &TokenMatchConfig,
) -> Result<MatchReport> {
    Ok(bertscore(bundle, pair, config)?.1)
}

/// Token-matching F1 as a [`MetricScore`], together with its detail report.
pub fn bertscore(
    bundle: &ModelBundle,
    pair: &SentencePair,
    config: &TokenMatchConfig,
) -> Result<(MetricScore, MatchReport)> {
    bundle.expect_kind(BundleKind::Encoder)?;
    let emb = encode_tokens_batch(bundle, &[&pair.text_a, &pair.text_b])?;
    bertscore_from_embeddings(
        &pair.id,
        &emb[0],
        &emb[1],
        bundle.rescale_baseline(),
        config,
        bundle.fingerprint(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f64]]) -> TokenEmbeddings {
        TokenEmbeddings::from_vectors(rows.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // dot = 1, norms 1 and sqrt(2)
        let expected = 1.0 / 2.0f64.sqrt();
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.707_106_78).abs() < 1e-8);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine(&[1.0], &[1.0, 1.0]), Err(Error::DimensionMismatch(1, 2))));
    }

    #[test]
    fn hand_enumerated_greedy_match() {
        // reference tokens e1, e2; candidate token e1
        let reference = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let candidate = emb(&[&[1.0, 0.0]]);
        let (p, r) = greedy_match(&reference, &candidate, None).unwrap();
        assert_eq!(r, 0.5);
        assert_eq!(p, 1.0);
        let report = match_report(p, r, None);
        assert!((report.raw_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.f1, report.raw_f1);
    }

    #[test]
    fn baseline_rescaling() {
        let report = match_report(0.9, 0.9, Some(0.8));
        assert!((report.raw_f1 - 0.9).abs() < 1e-15);
        assert!((report.f1 - 0.5).abs() < 1e-12);
        assert!((report.precision - 0.5).abs() < 1e-12);
        // below the baseline the reported F1 clamps at zero
        let low = match_report(0.7, 0.7, Some(0.8));
        assert_eq!(low.f1, 0.0);
        assert!(low.precision < 0.0);
    }

    #[test]
    fn zero_sum_gives_zero_f1() {
        assert_eq!(match_report(0.0, 0.0, None).raw_f1, 0.0);
        let r = match_report(-0.5, 0.5, None);
        assert_eq!(r.raw_f1, 0.0);
    }

    #[test]
    fn negative_similarity_is_clamped() {
        let a = emb(&[&[1.0, 0.0]]);
        let b = emb(&[&[-1.0, 0.0]]);
        let (score, report) = bertscore_from_embeddings("p", &a, &b, None, &TokenMatchConfig::default(), "fp").unwrap();
        assert_eq!(report.precision, -1.0);
        assert_eq!(score.score, 0.0);
        let s = sbert_from_embeddings("p", &a, &b, "fp").unwrap();
        assert_eq!((s.score, s.raw), (0.0, -1.0));
    }

    #[test]
    fn idf_weights_emphasise_rare_tokens() {
        let table = IdfTable::from_token_sets(vec![vec![1u32, 2], vec![1, 3], vec![1]]);
        // token 1 in all 3 docs: ln(4/4) = 0
        assert_eq!(table.weight(1), 0.0);
        assert!((table.weight(2) - (4.0f64 / 2.0).ln()).abs() < 1e-15);
        assert!((table.weight(99) - 4.0f64.ln()).abs() < 1e-15);

        let mut reference = emb(&[&[1.0, 0.0], &[0.0, 1.0]]);
        reference.token_ids = vec![1, 2];
        let mut candidate = emb(&[&[0.0, 1.0]]);
        candidate.token_ids = vec![2];
        // only token 2 carries weight on the reference side, and it is matched perfectly
        let (_, recall) = greedy_match(&reference, &candidate, Some(&table)).unwrap();
        assert!((recall - 1.0).abs() < 1e-12);
        let (_, uniform) = greedy_match(&reference, &candidate, None).unwrap();
        assert_eq!(uniform, 0.5);
    }
}
