//! Benchmark runs: score a labelled dataset with a set of metrics, summarise
//! the scores against the labels and persist everything under
//! `<out>/runs/<run_id>/`.
//!
//! A persisted run directory holds:
//!
//! * `manifest.json`: provenance, bundle fingerprints, configuration and the
//!   decisions in effect
//! * `pairs.jsonl`: the evaluated pairs in the canonical exchange format
//! * `scores.csv`: `pair_id,metric,score,raw,model_fingerprint`
//! * `summary.json`: per-metric statistics and the optional length split
//! * `figures/`: written by [`crate::figures::emit_figures`]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{encode_tokens_batch, load_bundle, ModelBundle, CONFIG_FILE};
use crate::cache::{CacheKey, ScoreCache};
use crate::error::{Error, Result};
use crate::ingest::{load_dataset, read_canonical_jsonl, from_canonical, subset, write_canonical_jsonl, DatasetSource};
use crate::metrics::{
    bertscore_from_embeddings, bleu_score, ensemble_score, sbert_from_embeddings, sts_score, sts_score_batch,
    StsConfig, TokenMatchConfig, BLEU_CONFIG,
};
use crate::stats::{
    class_summary, correlation_report, median_length_split, roc_auc, ClassSummary, CorrelationReport,
    LengthConvention, RocResult,
};
use crate::types::{DatasetName, LabelKind, LabeledDataset, Metric, MetricScore, SentencePair};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const FIGURES_DIR: &str = "figures";
const LOCK_FILE: &str = ".lock";

pub const BLEU_DIRECTION: &str = "reference=text_a, candidate=text_b";
const BLEU_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub n: usize,
    pub seed: u64,
    pub stratify: bool,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub subset: Option<SubsetSpec>,
    pub length_split: bool,
    pub length_convention: LengthConvention,
    /// Size of the scoring thread pool.
    pub workers: usize,
    /// Score cache root; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    pub sts_clamp: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            subset: None,
            length_split: false,
            length_convention: LengthConvention::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()).min(8),
            cache_dir: None,
            run_id: None,
            sts_clamp: true,
        }
    }
}

/// Bundles for the model-backed metrics, read from `<dir>/sts`, `<dir>/sbert`
/// and `<dir>/bertscore`.
#[derive(Debug, Clone, Default)]
pub struct BundleSet {
    bundles: BTreeMap<Metric, Arc<ModelBundle>>,
}

impl BundleSet {
    /// Loads the bundles `metrics` need; the ensemble needs all three.
    pub fn load(dir: &Path, metrics: &[Metric]) -> Result<Self> {
        let mut set = Self::default();
        for metric in required_components(metrics) {
            let sub = dir.join(metric.as_str());
            if !sub.join(CONFIG_FILE).is_file() {
                return Err(Error::BundleMissing(metric));
            }
            set.bundles.insert(metric, Arc::new(load_bundle(&sub)?));
        }
        Ok(set)
    }

    pub fn with(mut self, metric: Metric, bundle: Arc<ModelBundle>) -> Self {
        self.bundles.insert(metric, bundle);
        self
    }

    pub fn get(&self, metric: Metric) -> Result<&Arc<ModelBundle>> {
        self.bundles.get(&metric).ok_or(Error::BundleMissing(metric))
    }

    pub fn inference_calls(&self) -> u64 {
        self.bundles.values().map(|b| b.inference_calls()).sum()
    }
}

fn required_components(metrics: &[Metric]) -> Vec<Metric> {
    let mut needed: Vec<Metric> = metrics
        .iter()
        .flat_map(|&m| match m {
            Metric::Ensemble => Metric::ENSEMBLE_COMPONENTS.to_vec(),
            Metric::Bleu => vec![],
            other => vec![other],
        })
        .collect();
    needed.sort();
    needed.dedup();
    needed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub pair_id: String,
    pub metric: Metric,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub name: DatasetName,
    pub split: String,
    pub label_kind: Option<LabelKind>,
    pub source: Option<DatasetSource>,
    /// sha256 of the source file, when the dataset was read from disk.
    pub source_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRecord {
    pub dir: PathBuf,
    pub fingerprint: String,
    pub kind: String,
    pub max_len: usize,
    pub output_scale: f64,
    pub rescale_baseline: Option<f64>,
    pub embedding_layer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decisions {
    pub sts_clamp: bool,
    pub sts_scale: Option<f64>,
    pub length_convention: LengthConvention,
    pub bleu_direction: String,
    pub bleu_config: String,
    pub bertscore_idf: bool,
    pub bertscore_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowCounts {
    /// Pairs in the dataset as loaded.
    pub loaded: usize,
    /// Pairs evaluated after subsetting.
    pub evaluated: usize,
    pub scored: BTreeMap<Metric, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub inference_calls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub status: RunStatus,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub tool_version: String,
    pub dataset: DatasetRecord,
    pub subset: Option<SubsetSpec>,
    pub metrics: Vec<Metric>,
    pub rows: RowCounts,
    pub bundles: BTreeMap<Metric, BundleRecord>,
    pub metric_configs: BTreeMap<Metric, String>,
    pub config_hash: String,
    pub decisions: Decisions,
    pub execution: Execution,
    pub failures: Vec<PairFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSummary {
    Correlation(CorrelationReport),
    Classes {
        negative: ClassSummary,
        positive: ClassSummary,
        roc: RocResult,
    },
    Unavailable {
        reason: String,
    },
}

impl MetricSummary {
    pub fn correlation(&self) -> Option<&CorrelationReport> {
        match self {
            MetricSummary::Correlation(c) => Some(c),
            _ => None,
        }
    }

    pub fn classes(&self) -> Option<(&ClassSummary, &ClassSummary)> {
        match self {
            MetricSummary::Classes { negative, positive, .. } => Some((negative, positive)),
            _ => None,
        }
    }

    pub fn roc(&self) -> Option<&RocResult> {
        match self {
            MetricSummary::Classes { roc, .. } => Some(roc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSummary {
    pub n: usize,
    pub metrics: BTreeMap<Metric, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSplitSummary {
    pub convention: LengthConvention,
    pub median: f64,
    pub shorter: HalfSummary,
    pub longer: HalfSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: DatasetName,
    pub split: String,
    pub label_kind: Option<LabelKind>,
    pub metrics: BTreeMap<Metric, MetricSummary>,
    pub length_split: Option<LengthSplitSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub manifest: Manifest,
    /// The evaluated pairs, after any subsetting.
    pub dataset: LabeledDataset,
    /// Ordered by metric, then by dataset order.
    pub scores: Vec<MetricScore>,
    pub summary: RunSummary,
}

impl BenchmarkRun {
    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn is_partial(&self) -> bool {
        self.manifest.status == RunStatus::Partial
    }

    pub fn metrics(&self) -> &[Metric] {
        &self.manifest.metrics
    }

    /// Scores for `metric` aligned with the dataset pairs.
    pub fn scores_for(&self, metric: Metric) -> Vec<Option<f64>> {
        let by_id: HashMap<&str, f64> = self
            .scores
            .iter()
            .filter(|s| s.metric == metric)
            .map(|s| (s.pair_id.as_str(), s.score))
            .collect();
        self.dataset
            .pairs
            .iter()
            .map(|p| by_id.get(p.pair.id.as_str()).copied())
            .collect()
    }

    /// `(label, score)` for every scored pair.
    pub fn labelled_scores(&self, metric: Metric) -> (Vec<f64>, Vec<f64>) {
        self.dataset
            .pairs
            .iter()
            .zip(self.scores_for(metric))
            .filter_map(|(p, s)| s.map(|s| (p.label.value, s)))
            .unzip()
    }
}

struct Scorer<'a> {
    bundles: &'a BundleSet,
    cache: Option<ScoreCache>,
    sts: Option<StsConfig>,
    token_match: TokenMatchConfig,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<'a> Scorer<'a> {
    fn new(bundles: &'a BundleSet, components: &[Metric], options: &RunOptions) -> Result<Self> {
        let sts = if components.contains(&Metric::Sts) {
            Some(StsConfig::new(bundles.get(Metric::Sts)?.clone())?.with_clamp(options.sts_clamp))
        } else {
            None
        };
        for &m in components {
            if m.needs_bundle() {
                bundles.get(m)?;
            }
        }
        Ok(Self {
            bundles,
            cache: options.cache_dir.clone().map(ScoreCache::new),
            sts,
            token_match: TokenMatchConfig::default(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    fn config_id(&self, metric: Metric) -> String {
        match metric {
            Metric::Bleu => BLEU_CONFIG.to_string(),
            Metric::Sts => self.sts.as_ref().map(StsConfig::config_id).unwrap_or_default(),
            Metric::Sbert => self.bundles.get(Metric::Sbert).map_or_else(
                |_| String::new(),
                |b| format!("sbert/mean/layer={}", b.config().embedding_layer.output_name()),
            ),
            Metric::Bertscore => self
                .bundles
                .get(Metric::Bertscore)
                .map_or_else(|_| String::new(), |b| self.token_match.config_id(b)),
            Metric::Ensemble => "ensemble/mean(sts,sbert,bertscore)".to_string(),
        }
    }

    fn fingerprint(&self, metric: Metric) -> String {
        self.bundles
            .get(metric)
            .map_or_else(|_| String::new(), |b| b.fingerprint().to_string())
    }

    fn chunk_size(&self, metric: Metric) -> usize {
        self.bundles.get(metric).map_or(BLEU_CHUNK, |b| b.batch_size())
    }

    fn score_chunk(&self, metric: Metric, pairs: &[SentencePair]) -> Result<Vec<Result<MetricScore>>> {
        let fingerprint = self.fingerprint(metric);
        let config = self.config_id(metric);
        let keys: Vec<CacheKey> = pairs
            .iter()
            .map(|p| CacheKey::new(metric, &fingerprint, &p.text_a, &p.text_b, &config))
            .collect();
        let mut out: Vec<Option<Result<MetricScore>>> = Vec::with_capacity(pairs.len());
        let mut missing = Vec::new();
        for (i, (pair, key)) in pairs.iter().zip(&keys).enumerate() {
            let hit = match &self.cache {
                Some(cache) => cache.get(key)?,
                None => None,
            };
            match hit {
                Some(mut score) => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    score.pair_id = pair.id.clone();
                    out.push(Some(Ok(score)));
                }
                None => {
                    self.misses.fetch_add(1, Ordering::Relaxed);
                    out.push(None);
                    missing.push(i);
                }
            }
        }
        if !missing.is_empty() {
            let todo: Vec<SentencePair> = missing.iter().map(|&i| pairs[i].clone()).collect();
            for (i, result) in missing.into_iter().zip(self.compute(metric, &todo)) {
                if let (Some(cache), Ok(score)) = (&self.cache, &result) {
                    cache.put(&keys[i], score)?;
                }
                out[i] = Some(result);
            }
        }
        Ok(out.into_iter().map(|r| r.expect("every slot filled")).collect())
    }

    fn compute(&self, metric: Metric, pairs: &[SentencePair]) -> Vec<Result<MetricScore>> {
        match metric {
            Metric::Bleu => pairs.iter().map(bleu_score).collect(),
            Metric::Sts => {
                let config = self.sts.as_ref().expect("sts config present");
                match sts_score_batch(config, pairs) {
                    Ok(scores) => scores.into_iter().map(Ok).collect(),
                    Err(_) if pairs.len() > 1 => pairs.iter().map(|p| sts_score(config, p)).collect(),
                    Err(e) => vec![Err(e)],
                }
            }
            Metric::Sbert | Metric::Bertscore => {
                let bundle = match self.bundles.get(metric) {
                    Ok(b) => b,
                    Err(e) => return vec![Err(e)],
                };
                let texts: Vec<&str> = pairs.iter().flat_map(|p| [p.text_a.as_str(), p.text_b.as_str()]).collect();
                match encode_tokens_batch(bundle, &texts) {
                    Ok(emb) => pairs
                        .iter()
                        .zip(emb.chunks(2))
                        .map(|(p, e)| self.from_embeddings(metric, bundle, p, &e[0], &e[1]))
                        .collect(),
                    Err(_) if pairs.len() > 1 => pairs
                        .iter()
                        .map(|p| {
                            let e = encode_tokens_batch(bundle, &[&p.text_a, &p.text_b])?;
                            self.from_embeddings(metric, bundle, p, &e[0], &e[1])
                        })
                        .collect(),
                    Err(e) => vec![Err(e)],
                }
            }
            Metric::Ensemble => unreachable!("the ensemble is derived from its components"),
        }
    }

    fn from_embeddings(
        &self,
        metric: Metric,
        bundle: &ModelBundle,
        pair: &SentencePair,
        a: &crate::backend::TokenEmbeddings,
        b: &crate::backend::TokenEmbeddings,
    ) -> Result<MetricScore> {
        if metric == Metric::Sbert {
            sbert_from_embeddings(&pair.id, a, b, bundle.fingerprint())
        } else {
            bertscore_from_embeddings(
                &pair.id,
                a,
                b,
                bundle.rescale_baseline(),
                &self.token_match,
                bundle.fingerprint(),
            )
            .map(|(score, _)| score)
        }
    }
}

/// Loads the source, then scores and summarises it.
pub fn run_benchmark(
    source: &DatasetSource,
    metrics: &[Metric],
    bundles: &BundleSet,
    options: &RunOptions,
) -> Result<BenchmarkRun> {
    let dataset = load_dataset(source)?;
    let digest = hex::encode(Sha256::digest(fs::read(&source.path)?));
    run_dataset(&dataset, Some((source, digest)), metrics, bundles, options)
}

/// Scores an in-memory dataset.
pub fn run_dataset(
    dataset: &LabeledDataset,
    source: Option<(&DatasetSource, String)>,
    metrics: &[Metric],
    bundles: &BundleSet,
    options: &RunOptions,
) -> Result<BenchmarkRun> {
    let started_at = Utc::now();
    let mut metrics = metrics.to_vec();
    metrics.sort();
    metrics.dedup();

    let evaluated = match options.subset {
        Some(spec) => subset(dataset, spec.n, spec.seed, spec.stratify)?,
        None => dataset.clone(),
    };
    let components: Vec<Metric> = {
        let mut c: Vec<Metric> = metrics
            .iter()
            .flat_map(|&m| if m == Metric::Ensemble { Metric::ENSEMBLE_COMPONENTS.to_vec() } else { vec![m] })
            .collect();
        c.sort();
        c.dedup();
        c
    };
    let scorer = Scorer::new(bundles, &components, options)?;
    let calls_before = bundles.inference_calls();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::MalformedConfig(format!("cannot start worker pool: {e}")))?;
    let pairs: Vec<SentencePair> = evaluated.pairs.iter().map(|p| p.pair.clone()).collect();

    let mut computed: BTreeMap<Metric, Vec<Result<MetricScore>>> = BTreeMap::new();
    for &metric in &components {
        let chunks: Vec<&[SentencePair]> = pairs.chunks(scorer.chunk_size(metric).max(1)).collect();
        let results = pool.install(|| {
            chunks
                .par_iter()
                .map(|chunk| scorer.score_chunk(metric, chunk))
                .collect::<Result<Vec<_>>>()
        })?;
        computed.insert(metric, results.into_iter().flatten().collect());
    }
    if metrics.contains(&Metric::Ensemble) {
        let ensemble = (0..pairs.len())
            .map(|i| {
                let parts = Metric::ENSEMBLE_COMPONENTS
                    .iter()
                    .map(|m| match &computed[m][i] {
                        Ok(s) => Ok(s.clone()),
                        Err(e) => Err(Error::Inference(format!("{m} component failed: {e}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ensemble_score(&parts)
            })
            .collect();
        computed.insert(Metric::Ensemble, ensemble);
    }

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    let mut scored = BTreeMap::new();
    for &metric in &metrics {
        let mut n = 0;
        for (pair, result) in pairs.iter().zip(&computed[&metric]) {
            match result {
                Ok(s) => {
                    n += 1;
                    scores.push(s.clone());
                }
                Err(e) => failures.push(PairFailure {
                    pair_id: pair.id.clone(),
                    metric,
                    error: e.to_string(),
                }),
            }
        }
        scored.insert(metric, n);
    }

    let label_kind = evaluated.label_kind();
    let mut by_metric: BTreeMap<Metric, HashMap<&str, f64>> = BTreeMap::new();
    for s in &scores {
        by_metric.entry(s.metric).or_default().insert(&s.pair_id, s.score);
    }
    let summarize_all = |ds: &LabeledDataset| -> BTreeMap<Metric, MetricSummary> {
        metrics
            .iter()
            .map(|&m| {
                let empty = HashMap::new();
                let lookup = by_metric.get(&m).unwrap_or(&empty);
                let (labels, values): (Vec<f64>, Vec<f64>) = ds
                    .pairs
                    .iter()
                    .filter_map(|p| lookup.get(p.pair.id.as_str()).map(|&s| (p.label.value, s)))
                    .unzip();
                (m, summarize_metric(label_kind, &values, &labels))
            })
            .collect()
    };
    let length_split = options.length_split.then(|| {
        let split = median_length_split(&evaluated, options.length_convention);
        LengthSplitSummary {
            convention: options.length_convention,
            median: split.median,
            shorter: HalfSummary {
                n: split.shorter.len(),
                metrics: summarize_all(&split.shorter),
            },
            longer: HalfSummary {
                n: split.longer.len(),
                metrics: summarize_all(&split.longer),
            },
        }
    });
    let summary = RunSummary {
        dataset: evaluated.name,
        split: evaluated.split.clone(),
        label_kind,
        metrics: summarize_all(&evaluated),
        length_split,
    };

    let bundle_records: BTreeMap<Metric, BundleRecord> = components
        .iter()
        .filter_map(|&m| bundles.get(m).ok().map(|b| (m, bundle_record(b))))
        .collect();
    let metric_configs: BTreeMap<Metric, String> = metrics
        .iter()
        .chain(&components)
        .map(|&m| (m, scorer.config_id(m)))
        .collect();
    let config_hash = {
        let fingerprints: BTreeMap<Metric, &str> =
            bundle_records.iter().map(|(m, b)| (*m, b.fingerprint.as_str())).collect();
        let material = serde_json::json!({
            "dataset": evaluated.name,
            "split": evaluated.split,
            "subset": options.subset,
            "metrics": metrics,
            "configs": metric_configs,
            "fingerprints": fingerprints,
            "length_split": options.length_split.then_some(options.length_convention),
        });
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    };
    let run_id = options.run_id.clone().unwrap_or_else(|| {
        format!(
            "{}-{}-{}-{}",
            evaluated.name.as_str(),
            evaluated.split,
            started_at.format("%Y%m%dT%H%M%S%3fZ"),
            &config_hash[..8]
        )
    });
    let bertscore_bundle = bundles.get(Metric::Bertscore).ok();
    let manifest = Manifest {
        run_id,
        status: if failures.is_empty() { RunStatus::Complete } else { RunStatus::Partial },
        started_at,
        finished_at: Utc::now(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: DatasetRecord {
            name: evaluated.name,
            split: evaluated.split.clone(),
            label_kind,
            source: source.as_ref().map(|(s, _)| (*s).clone()),
            source_sha256: source.map(|(_, d)| d),
        },
        subset: options.subset,
        metrics: metrics.clone(),
        rows: RowCounts {
            loaded: dataset.len(),
            evaluated: evaluated.len(),
            scored,
        },
        bundles: bundle_records,
        metric_configs,
        config_hash,
        decisions: Decisions {
            sts_clamp: options.sts_clamp,
            sts_scale: scorer.sts.as_ref().map(|c| c.scale),
            length_convention: options.length_convention,
            bleu_direction: BLEU_DIRECTION.to_string(),
            bleu_config: BLEU_CONFIG.to_string(),
            bertscore_idf: scorer.token_match.idf.is_some(),
            bertscore_baseline: bertscore_bundle.and_then(|b| b.rescale_baseline()),
        },
        execution: Execution {
            inference_calls: bundles.inference_calls() - calls_before,
            cache_hits: scorer.hits.load(Ordering::Relaxed),
            cache_misses: scorer.misses.load(Ordering::Relaxed),
            workers: options.workers.max(1),
        },
        failures,
    };
    Ok(BenchmarkRun {
        manifest,
        dataset: evaluated,
        scores,
        summary,
    })
}

fn bundle_record(b: &ModelBundle) -> BundleRecord {
    BundleRecord {
        dir: b.dir().to_path_buf(),
        fingerprint: b.fingerprint().to_string(),
        kind: b.kind().as_str().to_string(),
        max_len: b.max_len(),
        output_scale: b.output_scale(),
        rescale_baseline: b.rescale_baseline(),
        embedding_layer: b.config().embedding_layer.output_name(),
    }
}

/// Statistics appropriate to the label kind: correlations for graded
/// labels, class summaries and ROC for binary labels.
pub fn summarize_metric(kind: Option<LabelKind>, scores: &[f64], labels: &[f64]) -> MetricSummary {
    let result = match kind {
        Some(LabelKind::Binary) => class_summary(scores, labels).and_then(|(negative, positive)| {
            Ok(MetricSummary::Classes {
                negative,
                positive,
                roc: roc_auc(scores, labels)?,
            })
        }),
        Some(_) => correlation_report(scores, labels).map(MetricSummary::Correlation),
        None => Err(Error::TooFewValues { needed: 1, got: 0 }),
    };
    result.unwrap_or_else(|e| MetricSummary::Unavailable { reason: e.to_string() })
}

struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::RunLocked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().expect("run files live in a directory");
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn run_dir(out: &Path, run_id: &str) -> PathBuf {
    out.join("runs").join(run_id)
}

/// Writes the run under `<out>/runs/<run_id>/`. Existing runs are never
/// overwritten.
pub fn persist_run(run: &BenchmarkRun, out: &Path) -> Result<PathBuf> {
    let dir = run_dir(out, run.run_id());
    fs::create_dir_all(&dir)?;
    let _lock = RunLock::acquire(&dir)?;
    if dir.join(MANIFEST_FILE).exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("run {} already exists", dir.display()),
        )));
    }
    write_atomic(&dir.join(PAIRS_FILE), |w| write_canonical_jsonl(w, &run.dataset))?;
    write_atomic(&dir.join(SCORES_FILE), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for s in &run.scores {
            csv.serialize(s)?;
        }
        if run.scores.is_empty() {
            csv.write_record(["pair_id", "metric", "score", "raw", "model_fingerprint"])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_atomic(&dir.join(SUMMARY_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &run.summary)?;
        Ok(w.write_all(b"\n")?)
    })?;
    // the manifest goes last and marks the run as written
    write_atomic(&dir.join(MANIFEST_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &run.manifest)?;
        Ok(w.write_all(b"\n")?)
    })?;
    Ok(dir)
}

pub fn load_run(dir: &Path) -> Result<BenchmarkRun> {
    let read = |name: &str| -> Result<Vec<u8>> {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path),
            _ => e.into(),
        })
    };
    let manifest: Manifest = serde_json::from_slice(&read(MANIFEST_FILE)?)?;
    let summary: RunSummary = serde_json::from_slice(&read(SUMMARY_FILE)?)?;
    let records = read_canonical_jsonl(&dir.join(PAIRS_FILE))?;
    let mut dataset = from_canonical(&records, manifest.dataset.name)?;
    dataset.split = manifest.dataset.split.clone();
    let mut scores = Vec::new();
    for row in csv::Reader::from_reader(read(SCORES_FILE)?.as_slice()).deserialize() {
        scores.push(row?);
    }
    let ids: HashSet<&str> = dataset.pairs.iter().map(|p| p.pair.id.as_str()).collect();
    if let Some(s) = scores.iter().find(|s: &&MetricScore| !ids.contains(s.pair_id.as_str())) {
        return Err(Error::Schema {
            field: "pair_id".into(),
            msg: format!("score for unknown pair {:?} in {}", s.pair_id, dir.display()),
        });
    }
    Ok(BenchmarkRun {
        manifest,
        dataset,
        scores,
        summary,
    })
}
