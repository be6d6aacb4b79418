//! Semantic similarity metrics and the benchmark harness around them.
//!
//! Four metrics score a [`SentencePair`] into `[0, 1]`:
//!
//! * **STSScore** ([`metrics::sts`]): a regression model fine-tuned on STS-B,
//!   its logit divided by five.
//! * **S-BERT** ([`metrics::embed::sbert_score`]): cosine of mean-pooled
//!   sentence embeddings.
//! * **BERTScore** ([`metrics::embed::bertscore`]): F1 of greedy cosine
//!   matching between contextual token embeddings.
//! * **BLEU** ([`metrics::bleu`]): sentence-level, orders 1-4, no smoothing.
//!
//! Model-backed metrics run portable [`backend::ModelBundle`]s; the
//! [`run`] and [`report`] modules evaluate them against labelled datasets.

pub mod backend;
pub mod cache;
mod error;
pub mod figures;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod run;
pub mod stats;
pub mod types;

pub use backend::{load_bundle, ModelBundle};
pub use cache::{CacheKey, ScoreCache};
pub use error::{Error, Result};
pub use types::{
    validate_dataset, DatasetName, Label, LabelKind, LabeledDataset, LabeledPair, Metric, MetricScore,
    SentencePair, Violation,
};
