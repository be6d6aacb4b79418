//! Correlation, per-class summaries, ROC/AUC and median length splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabeledDataset, LabeledPair};

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)
}

fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(&bad) => Err(Error::NonFinite(bad)),
        None => Ok(()),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with divisor `n - 1`; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Pearson's r. Constant input has no defined correlation and yields
/// [`Error::ConstantInput`] rather than a number.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson's r of the average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `None` when undefined (constant input).
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub n: usize,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ConstantInput) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn correlation_report(scores: &[f64], labels: &[f64]) -> Result<CorrelationReport> {
    Ok(CorrelationReport {
        pearson_r: defined(pearson(scores, labels))?,
        spearman_rho: defined(spearman(scores, labels))?,
        n: scores.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_label: u8,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn binary_labels(labels: &[f64]) -> Result<Vec<bool>> {
    labels
        .iter()
        .map(|&l| match l {
            l if l == 1.0 => Ok(true),
            l if l == 0.0 => Ok(false),
            other => Err(Error::NonBinaryLabel(other)),
        })
        .collect()
}

/// Mean and sample standard deviation of the scores of each class, negative class first.
pub fn class_summary(scores: &[f64], labels: &[f64]) -> Result<(ClassSummary, ClassSummary)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    check_finite(scores)?;
    let positive = binary_labels(labels)?;
    let summarize = |class: bool| -> Result<ClassSummary> {
        let xs: Vec<f64> = scores
            .iter()
            .zip(&positive)
            .filter(|(_, &p)| p == class)
            .map(|(&s, _)| s)
            .collect();
        if xs.is_empty() {
            return Err(Error::EmptyClass(class as u8));
        }
        Ok(ClassSummary {
            class_label: class as u8,
            mean: mean(&xs),
            std: sample_std(&xs),
            n: xs.len(),
        })
    };
    Ok((summarize(false)?, summarize(true)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve by threshold sweep and AUC as the Mann-Whitney statistic
/// (probability that a positive outscores a negative, ties counted half).
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    check_finite(scores)?;
    let positive = binary_labels(labels)?;
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::EmptyClass(1));
    }
    if n_neg == 0 {
        return Err(Error::EmptyClass(0));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Sweep thresholds from high to low; every tie group is one step. With
    // descending order, a tie group at positions start..end has ascending
    // ranks n-end+1 ..= n-start, whose doubled mean is 2n - start - end + 1.
    let n = scores.len() as u128;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_rank = 2 * n + 1 - start as u128 - end as u128;
        for &i in &order[start..end] {
            if positive[i] {
                tp += 1;
                doubled_rank_sum += doubled_rank;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        start = end;
    }

    let (np, nn) = (n_pos as u128, n_neg as u128);
    let doubled_u = doubled_rank_sum - np * (np + 1);
    let auc = doubled_u as f64 / (2 * np * nn) as f64;
    Ok(RocResult { points, auc })
}

/// How the length of a pair is measured, in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthConvention {
    /// Mean of the two texts' character counts.
    #[default]
    MeanOfTexts,
    FirstText,
    Total,
}

impl LengthConvention {
    pub fn pair_length(self, pair: &LabeledPair) -> f64 {
        let a = pair.pair.text_a.chars().count() as f64;
        let b = pair.pair.text_b.chars().count() as f64;
        match self {
            LengthConvention::MeanOfTexts => (a + b) / 2.0,
            LengthConvention::FirstText => a,
            LengthConvention::Total => a + b,
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthSplit {
    pub shorter: LabeledDataset,
    pub longer: LabeledDataset,
    pub median: f64,
}

/// Splits at the median pair length: strictly shorter pairs in one half,
/// pairs at or above the median in the other. Order is preserved.
pub fn median_length_split(dataset: &LabeledDataset, convention: LengthConvention) -> LengthSplit {
    let lengths: Vec<f64> = dataset.pairs.iter().map(|p| convention.pair_length(p)).collect();
    let median = if lengths.is_empty() { 0.0 } else { median(&lengths) };
    let (shorter, longer): (Vec<_>, Vec<_>) = dataset
        .pairs
        .iter()
        .zip(&lengths)
        .partition(|(_, &len)| len < median);
    let unzip = |v: Vec<(&LabeledPair, &f64)>| v.into_iter().map(|(p, _)| p.clone()).collect();
    LengthSplit {
        shorter: dataset.with_pairs(unzip(shorter)),
        longer: dataset.with_pairs(unzip(longer)),
        median,
    }
}
