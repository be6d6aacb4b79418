//! Domain types shared by every metric, loader and report.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Two texts to compare. `text_a` plays the reference role for the
/// asymmetric metrics (BLEU, token matching).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub text_a: String,
    pub text_b: String,
}

impl SentencePair {
    pub fn new(id: impl Into<String>, text_a: impl Into<String>, text_b: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text_a: text_a.into(),
            text_b: text_b.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    #[serde(rename = "similarity_0_5")]
    Similarity0To5,
    #[serde(rename = "binary")]
    Binary,
    #[serde(rename = "mqm")]
    Mqm,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Similarity0To5 => "similarity_0_5",
            LabelKind::Binary => "binary",
            LabelKind::Mqm => "mqm",
        }
    }

    /// Whether `value` is admissible for this kind.
    pub fn admits(self, value: f64) -> bool {
        match self {
            LabelKind::Similarity0To5 => (0.0..=5.0).contains(&value),
            LabelKind::Binary => value == 0.0 || value == 1.0,
            LabelKind::Mqm => value.is_finite(),
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similarity_0_5" => Ok(LabelKind::Similarity0To5),
            "binary" => Ok(LabelKind::Binary),
            "mqm" => Ok(LabelKind::Mqm),
            other => Err(format!("unknown label kind {other:?}")),
        }
    }
}

/// A human judgement. For binary labels 1 is the semantically equal class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub kind: LabelKind,
    pub value: f64,
}

impl Label {
    pub fn similarity(value: f64) -> Self {
        Self {
            kind: LabelKind::Similarity0To5,
            value,
        }
    }

    pub fn binary(positive: bool) -> Self {
        Self {
            kind: LabelKind::Binary,
            value: if positive { 1.0 } else { 0.0 },
        }
    }

    pub fn mqm(value: f64) -> Self {
        Self {
            kind: LabelKind::Mqm,
            value,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kind.admits(self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Stsb,
    Mrpc,
    Qqp,
    #[serde(rename = "wmt22_zh_en")]
    Wmt22ZhEn,
    Custom,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Stsb => "stsb",
            DatasetName::Mrpc => "mrpc",
            DatasetName::Qqp => "qqp",
            DatasetName::Wmt22ZhEn => "wmt22_zh_en",
            DatasetName::Custom => "custom",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DatasetName::Stsb => "STS-B",
            DatasetName::Mrpc => "MRPC",
            DatasetName::Qqp => "QQP",
            DatasetName::Wmt22ZhEn => "WMT22-ZH-EN",
            DatasetName::Custom => "custom",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair: SentencePair,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: DatasetName,
    pub split: String,
    pub pairs: Vec<LabeledPair>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Label kind of the first pair; `None` for an empty dataset.
    pub fn label_kind(&self) -> Option<LabelKind> {
        self.pairs.first().map(|p| p.label.kind)
    }

    pub fn labels(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.label.value).collect()
    }

    /// A dataset with the same name and split holding the given pairs.
    pub fn with_pairs(&self, pairs: Vec<LabeledPair>) -> Self {
        Self {
            name: self.name,
            split: self.split.clone(),
            pairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Bertscore,
    Sbert,
    Sts,
    Ensemble,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Bleu,
        Metric::Bertscore,
        Metric::Sbert,
        Metric::Sts,
        Metric::Ensemble,
    ];

    /// The three embedding-based metrics averaged by the ensemble.
    pub const ENSEMBLE_COMPONENTS: [Metric; 3] = [Metric::Sts, Metric::Sbert, Metric::Bertscore];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Bertscore => "bertscore",
            Metric::Sbert => "sbert",
            Metric::Sts => "sts",
            Metric::Ensemble => "ensemble",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Metric::Bleu => "BLEU",
            Metric::Bertscore => "BERTScore",
            Metric::Sbert => "S-BERT",
            Metric::Sts => "STSScore",
            Metric::Ensemble => "Ensemble",
        }
    }

    pub fn needs_bundle(self) -> bool {
        !matches!(self, Metric::Bleu | Metric::Ensemble)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// One metric's verdict on one pair.
///
/// `score` is the reported value in `[0, 1]`; `raw` is the value before
/// clamping (a cosine can be negative, a regression logit can overshoot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub pair_id: String,
    pub metric: Metric,
    pub score: f64,
    pub raw: f64,
    pub model_fingerprint: String,
}

impl MetricScore {
    pub fn clamped(
        pair_id: impl Into<String>,
        metric: Metric,
        raw: f64,
        model_fingerprint: impl Into<String>,
    ) -> Self {
        Self {
            pair_id: pair_id.into(),
            metric,
            score: clamp_unit(raw),
            raw,
            model_fingerprint: model_fingerprint.into(),
        }
    }
}

pub fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

pub(crate) fn is_blank(text: &str) -> bool {
    text.trim().is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    EmptyId,
    DuplicateId,
    EmptyTextA,
    EmptyTextB,
    LabelOutOfRange { kind: LabelKind },
    MixedLabelKinds { expected: LabelKind, found: LabelKind },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EmptyId => f.write_str("pair id is empty"),
            Rule::DuplicateId => f.write_str("pair id is not unique"),
            Rule::EmptyTextA => f.write_str("text_a is empty after trimming"),
            Rule::EmptyTextB => f.write_str("text_b is empty after trimming"),
            Rule::LabelOutOfRange { kind } => write!(f, "label outside the {kind} range"),
            Rule::MixedLabelKinds { expected, found } => {
                write!(f, "label kind {found} differs from dataset kind {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub pair_id: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pair {:?}: {}", self.pair_id, self.rule)
    }
}

/// Checks every dataset invariant; an empty result means the dataset is well formed.
pub fn validate_dataset(dataset: &LabeledDataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let expected_kind = dataset.label_kind();

    for LabeledPair { pair, label } in &dataset.pairs {
        let mut flag = |rule| {
            violations.push(Violation {
                pair_id: pair.id.clone(),
                rule,
            })
        };
        if pair.id.is_empty() {
            flag(Rule::EmptyId);
        } else if !seen.insert(pair.id.as_str()) {
            flag(Rule::DuplicateId);
        }
        if is_blank(&pair.text_a) {
            flag(Rule::EmptyTextA);
        }
        if is_blank(&pair.text_b) {
            flag(Rule::EmptyTextB);
        }
        if let Some(expected) = expected_kind {
            if label.kind != expected {
                flag(Rule::MixedLabelKinds {
                    expected,
                    found: label.kind,
                });
            }
        }
        if !label.is_valid() {
            flag(Rule::LabelOutOfRange { kind: label.kind });
        }
    }
    violations
}
