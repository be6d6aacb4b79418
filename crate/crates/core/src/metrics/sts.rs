//! STSScore: a regression model fine-tuned for semantic textual similarity,
//! its output divided by the label scale so similarity lands in `[0, 1]`.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::backend::{run_regression_batch, tokenize_pair, BundleKind, ModelBundle};
use crate::error::{Error, Result};
use crate::types::{Metric, MetricScore, SentencePair};

#[derive(Debug, Clone)]
pub struct StsConfig {
    pub bundle: Arc<ModelBundle>,
    /// Divisor applied to the logit; defaults to the bundle's `output_scale` (5 for STS-B heads).
    pub scale: f64,
    /// Clamp to `[0, 1]`. The unclamped value is always kept in `raw`.
    pub clamp: bool,
}

impl StsConfig {
    pub fn new(bundle: Arc<ModelBundle>) -> Result<Self> {
        bundle.expect_kind(BundleKind::RegressionPair)?;
        let scale = bundle.output_scale();
        Ok(Self {
            bundle,
            scale,
            clamp: true,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::MalformedConfig(format!("sts scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn config_id(&self) -> String {
        format!("sts/scale={:?}/clamp={}", self.scale, self.clamp)
    }

    /// Turns a logit into the metric score.
    pub fn score_logit(&self, pair_id: &str, logit: f64) -> MetricScore {
        let raw = logit / self.scale;
        let mut score = MetricScore::clamped(pair_id, Metric::Sts, raw, self.bundle.fingerprint());
        if !self.clamp {
            score.score = raw;
        }
        score
    }
}

pub fn sts_score(config: &StsConfig, pair: &SentencePair) -> Result<MetricScore> {
    Ok(sts_score_batch(config, std::slice::from_ref(pair))?.remove(0))
}

/// Scores many pairs, running the graph in the bundle's batch size.
pub fn sts_score_batch(config: &StsConfig, pairs: &[SentencePair]) -> Result<Vec<MetricScore>> {
    let inputs = pairs
        .iter()
        .map(|p| tokenize_pair(&config.bundle, &p.text_a, &p.text_b))
        .collect::<Result<Vec<_>>>()?;
    let logits = run_regression_batch(&config.bundle, &inputs)?;
    Ok(pairs
        .iter()
        .zip(logits)
        .map(|(p, logit)| config.score_logit(&p.id, logit))
        .collect())
}

/// Mean of the STSScore, S-BERT and token-matching scores for one pair.
pub fn ensemble_score(scores: &[MetricScore]) -> Result<MetricScore> {
    let mut parts = Vec::with_capacity(3);
    for metric in Metric::ENSEMBLE_COMPONENTS {
        let mut found = scores.iter().filter(|s| s.metric == metric);
        let first = found.next().ok_or(Error::MissingComponent(metric))?;
        if found.next().is_some() {
            return Err(Error::MalformedConfig(format!("ensemble got two {metric} scores")));
        }
        parts.push(first);
    }
    if let Some(stray) = scores.iter().find(|s| !Metric::ENSEMBLE_COMPONENTS.contains(&s.metric)) {
        return Err(Error::MalformedConfig(format!(
            "{} is not an ensemble component",
            stray.metric
        )));
    }
    let id = &parts[0].pair_id;
    if let Some(other) = parts.iter().find(|s| s.pair_id != *id) {
        return Err(Error::PairIdMismatch(id.clone(), other.pair_id.clone()));
    }
    let mean = parts.iter().map(|s| s.score).sum::<f64>() / 3.0;
    let mut h = Sha256::new();
    for s in &parts {
        h.update(s.model_fingerprint.as_bytes());
        h.update([0u8]);
    }
    Ok(MetricScore {
        pair_id: id.clone(),
        metric: Metric::Ensemble,
        score: mean,
        raw: mean,
        model_fingerprint: hex::encode(h.finalize()),
    })
}
