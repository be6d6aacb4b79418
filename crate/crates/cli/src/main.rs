use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stsscore::backend::CONFIG_FILE;
use stsscore::figures::emit_figures;
use stsscore::ingest::{read_canonical_jsonl, DatasetSource, SourceKind};
use stsscore::metrics::{bertscore, bleu_score, ensemble_score, sbert_score, sts_score, StsConfig, TokenMatchConfig};
use stsscore::report::{length_split_table, summary_table, TableFormat};
use stsscore::run::{load_run, persist_run, run_benchmark, BundleSet, RunOptions, SubsetSpec, FIGURES_DIR, MANIFEST_FILE};
use stsscore::stats::LengthConvention;
use stsscore::{load_bundle, Error, Metric, MetricScore, SentencePair};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "stsscore", version, about = "Semantic similarity metrics and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one pair of texts, or every pair in a canonical JSONL file.
    Score(ScoreArgs),
    /// Score a labelled dataset and persist the run.
    Benchmark(BenchmarkArgs),
    /// Tabulate persisted runs.
    Report(ReportArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Metrics to compute; defaults to every metric the bundles allow when scoring a file.
    #[arg(long, value_parser = parse_metric, value_delimiter = ',')]
    metric: Vec<Metric>,
    /// A bundle directory, or a directory holding `sts/`, `sbert/` and `bertscore/` bundles.
    #[arg(long)]
    bundle_dir: Option<PathBuf>,
    #[arg(long, requires = "text_b", conflicts_with = "pairs")]
    text_a: Option<String>,
    #[arg(long, requires = "text_a")]
    text_b: Option<String>,
    /// Canonical JSONL file of pairs; writes `id,metric,score` rows to stdout.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Stsb,
    Mrpc,
    Qqp,
    #[value(name = "wmt22_zh_en")]
    Wmt22ZhEn,
    Canonical,
}

impl DatasetKind {
    fn source_kind(self) -> SourceKind {
        match self {
            DatasetKind::Stsb => SourceKind::Stsb,
            DatasetKind::Mrpc => SourceKind::Mrpc,
            DatasetKind::Qqp => SourceKind::Qqp,
            DatasetKind::Wmt22ZhEn => SourceKind::Wmt22ZhEn,
            DatasetKind::Canonical => SourceKind::CanonicalJsonl,
        }
    }

    fn default_split(self) -> &'static str {
        match self {
            DatasetKind::Qqp => "train",
            _ => "test",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LengthArg {
    Mean,
    First,
    Total,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    dataset: DatasetKind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_metric, value_delimiter = ',', required = true)]
    metrics: Vec<Metric>,
    /// Directory holding `sts/`, `sbert/` and `bertscore/` bundles.
    #[arg(long)]
    bundles: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Split recorded for the data file (defaults: train for QQP, test otherwise).
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value_t = 0, requires = "subset")]
    seed: u64,
    #[arg(long, requires = "subset")]
    stratify: bool,
    #[arg(long)]
    length_split: bool,
    #[arg(long, value_enum, default_value = "mean")]
    length_convention: LengthArg,
    /// Score cache directory (default `<out>/cache`).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, conflicts_with = "cache")]
    no_cache: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
    /// Report STSScore values outside [0, 1] unclamped.
    #[arg(long)]
    no_clamp: bool,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    figures: bool,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Md,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Json => TableFormat::Json,
            FormatArg::Md => TableFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, or output directories containing `runs/`.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    /// Write figures into each run's `figures/` directory.
    #[arg(long)]
    figures: bool,
    /// Tabulate one metric on all pairs and on both length halves instead.
    #[arg(long, value_parser = parse_metric)]
    length_split: Option<Metric>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::EmptyText
            | Error::AllTokensExcluded
            | Error::Parse { .. }
            | Error::WrongSplit { .. }
            | Error::Schema { .. }
            | Error::SubsetRange { .. }
            | Error::StratifyNonBinary
            | Error::NonBinaryLabel(_)
            | Error::NonFinite(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => EXIT_DATA,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(args) => score(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// `dir` itself when it is a bundle, else `dir/<metric>`.
fn bundle_path(dir: &Path, metric: Metric) -> PathBuf {
    if dir.join(CONFIG_FILE).is_file() {
        dir.to_path_buf()
    } else {
        dir.join(metric.as_str())
    }
}

struct PairScorer {
    metrics: Vec<Metric>,
    bundles: BundleSet,
    sts: Option<StsConfig>,
}

impl PairScorer {
    fn new(metrics: Vec<Metric>, dir: Option<&Path>) -> Result<Self, Failure> {
        let mut bundles = BundleSet::default();
        for &m in &metrics {
            let components = match m {
                Metric::Ensemble => Metric::ENSEMBLE_COMPONENTS.to_vec(),
                Metric::Bleu => Vec::new(),
                other => vec![other],
            };
            for c in components {
                if bundles.get(c).is_ok() {
                    continue;
                }
                let dir = dir.ok_or_else(|| Failure::config(format!("--bundle-dir is required for {c}")))?;
                let path = if m == Metric::Ensemble { dir.join(c.as_str()) } else { bundle_path(dir, c) };
                if !path.join(CONFIG_FILE).is_file() {
                    return Err(Error::BundleMissing(c).into());
                }
                bundles = bundles.with(c, Arc::new(load_bundle(&path)?));
            }
        }
        let sts = match bundles.get(Metric::Sts) {
            Ok(b) => Some(StsConfig::new(b.clone())?),
            Err(_) => None,
        };
        Ok(Self { metrics, bundles, sts })
    }

    fn component(&self, metric: Metric, pair: &SentencePair) -> Result<MetricScore, Error> {
        match metric {
            Metric::Bleu => bleu_score(pair),
            Metric::Sts => sts_score(self.sts.as_ref().ok_or(Error::BundleMissing(Metric::Sts))?, pair),
            Metric::Sbert => sbert_score(self.bundles.get(Metric::Sbert)?, pair),
            Metric::Bertscore => {
                Ok(bertscore(self.bundles.get(Metric::Bertscore)?, pair, &TokenMatchConfig::default())?.0)
            }
            Metric::Ensemble => {
                let parts = Metric::ENSEMBLE_COMPONENTS
                    .iter()
                    .map(|&c| self.component(c, pair))
                    .collect::<Result<Vec<_>, _>>()?;
                ensemble_score(&parts)
            }
        }
    }
}

fn available_metrics(dir: Option<&Path>) -> Vec<Metric> {
    let mut metrics = vec![Metric::Bleu];
    if let Some(dir) = dir {
        for m in Metric::ENSEMBLE_COMPONENTS {
            if dir.join(m.as_str()).join(CONFIG_FILE).is_file() {
                metrics.push(m);
            }
        }
        if Metric::ENSEMBLE_COMPONENTS.iter().all(|m| metrics.contains(m)) {
            metrics.push(Metric::Ensemble);
        }
    }
    metrics.sort();
    metrics
}

fn score(args: ScoreArgs) -> Result<u8, Failure> {
    let dir = args.bundle_dir.as_deref();
    if let (Some(a), Some(b)) = (&args.text_a, &args.text_b) {
        let metric = match args.metric.as_slice() {
            [m] => *m,
            [] => return Err(Failure::config("--metric is required with --text-a/--text-b")),
            _ => return Err(Failure::config("give a single --metric with --text-a/--text-b")),
        };
        let scorer = PairScorer::new(vec![metric], dir)?;
        let s = scorer.component(metric, &SentencePair::new("cli", a.as_str(), b.as_str()))?;
        println!("{}", s.score);
        return Ok(0);
    }
    let Some(path) = &args.pairs else {
        return Err(Failure::config("give --text-a/--text-b or --pairs"));
    };
    let records = read_canonical_jsonl(path)?;
    let metrics = if args.metric.is_empty() { available_metrics(dir) } else { args.metric.clone() };
    let scorer = PairScorer::new(metrics, dir)?;
    let stdout = io::stdout();
    let mut out = csv::Writer::from_writer(stdout.lock());
    out.write_record(["id", "metric", "score"]).map_err(Error::from)?;
    let mut failed = 0usize;
    for r in &records {
        let pair = SentencePair::new(r.id.as_str(), r.text_a.as_str(), r.text_b.as_str());
        for &m in &scorer.metrics {
            match scorer.component(m, &pair) {
                Ok(s) => out
                    .write_record([pair.id.as_str(), m.as_str(), &s.score.to_string()])
                    .map_err(Error::from)?,
                Err(e) => {
                    failed += 1;
                    log::error!("pair {:?}, {m}: {e}", pair.id);
                }
            }
        }
        out.flush()?;
    }
    Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
}

fn benchmark(args: BenchmarkArgs) -> Result<u8, Failure> {
    let split = args.split.clone().unwrap_or_else(|| args.dataset.default_split().to_string());
    let source = DatasetSource::new(args.dataset.source_kind(), &args.data, split).lenient(args.lenient);
    let bundles = match &args.bundles {
        Some(dir) => BundleSet::load(dir, &args.metrics)?,
        None => match args.metrics.iter().find(|m| m.needs_bundle()) {
            Some(&m) => return Err(Error::BundleMissing(m).into()),
            None => BundleSet::default(),
        },
    };
    let mut options = RunOptions {
        subset: args.subset.map(|n| SubsetSpec {
            n,
            seed: args.seed,
            stratify: args.stratify,
        }),
        length_split: args.length_split,
        length_convention: match args.length_convention {
            LengthArg::Mean => LengthConvention::MeanOfTexts,
            LengthArg::First => LengthConvention::FirstText,
            LengthArg::Total => LengthConvention::Total,
        },
        cache_dir: if args.no_cache {
            None
        } else {
            Some(args.cache.clone().unwrap_or_else(|| args.out.join("cache")))
        },
        run_id: args.run_id.clone(),
        sts_clamp: !args.no_clamp,
        ..RunOptions::default()
    };
    if let Some(w) = args.workers {
        options.workers = w;
    }
    let run = run_benchmark(&source, &args.metrics, &bundles, &options)?;
    let dir = persist_run(&run, &args.out)?;
    if args.figures {
        emit_figures(&run, &dir.join(FIGURES_DIR))?;
    }
    let table = summary_table(std::slice::from_ref(&run))?;
    let mut stdout = io::stdout().lock();
    write!(stdout, "{}", table.render(args.format.into())?)?;
    eprintln!("run written to {}", dir.display());
    if run.is_partial() {
        eprintln!(
            "warning: {} pair/metric scores failed; run marked partial",
            run.manifest.failures.len()
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn run_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut dirs = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            dirs.push(p.clone());
            continue;
        }
        let runs = p.join("runs");
        if !runs.is_dir() {
            return Err(Failure::config(format!("{} is not a run directory", p.display())));
        }
        let mut found: Vec<PathBuf> = std::fs::read_dir(&runs)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(MANIFEST_FILE).is_file())
            .collect();
        found.sort();
        dirs.extend(found);
    }
    Ok(dirs)
}

fn report(args: ReportArgs) -> Result<u8, Failure> {
    let runs = run_dirs(&args.runs)?
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>, _>>()?;
    let table = match args.length_split {
        Some(metric) => length_split_table(&runs, metric)?,
        None => summary_table(&runs)?,
    };
    let mut stdout = io::stdout().lock();
    write!(stdout, "{}", table.render(args.format.into())?)?;
    if args.figures {
        for (run, dir) in runs.iter().zip(run_dirs(&args.runs)?) {
            for f in emit_figures(run, &dir.join(FIGURES_DIR))? {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(if runs.iter().any(|r| r.is_partial()) { EXIT_PARTIAL } else { 0 })
}
