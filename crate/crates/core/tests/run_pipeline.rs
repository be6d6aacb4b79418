use std::fs;
use std::path::Path;
use std::sync::Arc;

use stsscore::backend::fixture::{write_fixture_bundle, write_fixture_bundle_set, EncoderFixture, FixtureBundleSpec};
use stsscore::figures::emit_figures;
use stsscore::ingest::{DatasetSource, SourceKind};
use stsscore::report::{length_split_table, summary_table, Cell, TableFormat};
use stsscore::run::{
    load_run, persist_run, run_benchmark, run_dataset, BundleSet, MetricSummary, RunOptions, RunStatus, SubsetSpec,
    SCORES_FILE,
};
use stsscore::{load_bundle, DatasetName, Error, Label, LabeledDataset, LabeledPair, Metric, SentencePair};

const VOCAB: &[&str] = &[
    "a", "the", "cat", "dog", "sat", "ran", "on", "mat", "park", "in", "big", "small", "red", "car", "drives", "fast",
];

fn pair(id: &str, a: &str, b: &str, label: Label) -> LabeledPair {
    LabeledPair {
        pair: SentencePair::new(id, a, b),
        label,
    }
}

fn stsb_fixture() -> LabeledDataset {
    LabeledDataset {
        name: DatasetName::Stsb,
        split: "test".into(),
        pairs: vec![
            pair("0", "the cat sat on the mat", "the cat sat on the mat", Label::similarity(5.0)),
            pair("1", "the cat sat on the mat", "the dog sat in the park", Label::similarity(2.0)),
            pair("2", "a red car drives fast", "the cat ran", Label::similarity(0.0)),
        ],
    }
}

fn binary_fixture() -> LabeledDataset {
    let sentences = ["the cat sat", "a dog ran", "the red car", "big park", "small mat", "dog drives fast"];
    let mut pairs = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        pairs.push(pair(&format!("p{i}"), s, s, Label::binary(true)));
        let other = sentences[(i + 3) % sentences.len()];
        pairs.push(pair(&format!("n{i}"), s, other, Label::binary(false)));
    }
    LabeledDataset {
        name: DatasetName::Mrpc,
        split: "test".into(),
        pairs,
    }
}

fn bundles(root: &Path) -> BundleSet {
    write_fixture_bundle_set(root, VOCAB).unwrap();
    BundleSet::load(root, &Metric::ALL).unwrap()
}

fn options(workers: usize) -> RunOptions {
    RunOptions {
        workers,
        ..RunOptions::default()
    }
}

#[test]
fn three_pair_stsb_run() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(dir.path());
    let run = run_dataset(&stsb_fixture(), None, &Metric::ALL, &set, &options(2)).unwrap();
    assert_eq!(run.scores.len(), 3 * Metric::ALL.len());
    assert_eq!(run.manifest.status, RunStatus::Complete);
    for m in Metric::ALL {
        let report = run.summary.metrics[&m].correlation().expect("correlation summary");
        assert_eq!(report.n, 3);
        assert!(report.pearson_r.is_some(), "{m}");
    }
    // identical texts score 1 on every overlap- or identity-based metric
    for s in run.scores.iter().filter(|s| s.pair_id == "0") {
        assert!((s.score - 1.0).abs() < 1e-12, "{:?}", s);
    }
    assert_eq!(run.manifest.decisions.bleu_direction, "reference=text_a, candidate=text_b");
    assert!(run.manifest.decisions.sts_clamp);
    assert_eq!(run.manifest.decisions.sts_scale, Some(5.0));
    assert_eq!(run.manifest.rows.evaluated, 3);
    assert!(run.manifest.execution.inference_calls > 0);
}

#[test]
fn perfect_separation_gives_auc_one() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(dir.path());
    let run = run_dataset(&binary_fixture(), None, &[Metric::Sts, Metric::Bleu], &set, &options(1)).unwrap();
    match &run.summary.metrics[&Metric::Sts] {
        MetricSummary::Classes { negative, positive, roc } => {
            assert_eq!(roc.auc, 1.0);
            assert_eq!(positive.mean, 1.0);
            assert_eq!(negative.mean, 0.0);
            assert_eq!((negative.n, positive.n), (6, 6));
        }
        other => panic!("expected class summary, got {other:?}"),
    }
}

#[test]
fn warm_cache_rerun_is_identical_without_inference() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(&dir.path().join("bundles"));
    let opts = RunOptions {
        cache_dir: Some(dir.path().join("cache")),
        ..options(3)
    };
    let first = run_dataset(&binary_fixture(), None, &Metric::ALL, &set, &opts).unwrap();
    assert!(first.manifest.execution.inference_calls > 0);
    assert_eq!(first.manifest.execution.cache_hits, 0);

    let fresh = BundleSet::load(&dir.path().join("bundles"), &Metric::ALL).unwrap();
    let second = run_dataset(&binary_fixture(), None, &Metric::ALL, &fresh, &opts).unwrap();
    assert_eq!(second.manifest.execution.inference_calls, 0);
    assert_eq!(second.manifest.execution.cache_misses, 0);
    assert_eq!(first.scores, second.scores);
    assert_eq!(first.summary, second.summary);
    for (a, b) in first.scores.iter().zip(&second.scores) {
        assert_eq!(a.score.to_bits(), b.score.to_bits());
        assert_eq!(a.raw.to_bits(), b.raw.to_bits());
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(dir.path());
    let one = run_dataset(&binary_fixture(), None, &Metric::ALL, &set, &options(1)).unwrap();
    let many = run_dataset(&binary_fixture(), None, &Metric::ALL, &set, &options(6)).unwrap();
    assert_eq!(one.scores, many.scores);
    assert_eq!(one.summary, many.summary);
}

#[test]
fn persisted_runs_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(&dir.path().join("bundles"));
    let opts = RunOptions {
        run_id: Some("fixture-run".into()),
        length_split: true,
        ..options(2)
    };
    let run = run_dataset(&stsb_fixture(), None, &Metric::ALL, &set, &opts).unwrap();
    let out = dir.path().join("out");
    let run_dir = persist_run(&run, &out).unwrap();
    assert_eq!(run_dir, out.join("runs").join("fixture-run"));
    let header = fs::read_to_string(run_dir.join(SCORES_FILE)).unwrap();
    assert_eq!(header.lines().next().unwrap(), "pair_id,metric,score,raw,model_fingerprint");

    let loaded = load_run(&run_dir).unwrap();
    assert_eq!(loaded, run);

    // append-only
    assert!(persist_run(&run, &out).is_err());
    assert!(!run_dir.join(".lock").exists());
}

#[test]
fn locked_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(&dir.path().join("bundles"));
    let opts = RunOptions {
        run_id: Some("locked".into()),
        ..options(1)
    };
    let run = run_dataset(&stsb_fixture(), None, &[Metric::Bleu], &set, &opts).unwrap();
    let run_dir = dir.path().join("runs").join("locked");
    fs::create_dir_all(&run_dir).unwrap();
    fs::write(run_dir.join(".lock"), "12345").unwrap();
    assert!(matches!(persist_run(&run, dir.path()), Err(Error::RunLocked(_))));
}

#[test]
fn missing_bundle_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture_bundle_set(dir.path(), VOCAB).unwrap();
    fs::remove_dir_all(dir.path().join("sbert")).unwrap();
    assert!(BundleSet::load(dir.path(), &[Metric::Sts, Metric::Bleu]).is_ok());
    assert!(matches!(
        BundleSet::load(dir.path(), &[Metric::Ensemble]),
        Err(Error::BundleMissing(Metric::Sbert))
    ));
    let empty = BundleSet::default();
    assert!(matches!(
        run_dataset(&stsb_fixture(), None, &[Metric::Sts], &empty, &options(1)),
        Err(Error::BundleMissing(Metric::Sts))
    ));
    // BLEU needs no bundle at all
    assert!(run_dataset(&stsb_fixture(), None, &[Metric::Bleu], &empty, &options(1)).is_ok());
}

#[test]
fn failing_pairs_mark_the_run_partial() {
    let dir = tempfile::tempdir().unwrap();
    let encoder_dir = dir.path().join("tight");
    // room for the special tokens only: nothing is left to pool
    write_fixture_bundle(
        &encoder_dir,
        &FixtureBundleSpec::encoder(
            EncoderFixture {
                dim: 8,
                vectors: Default::default(),
            },
            VOCAB,
        )
        .with_max_len(2),
    )
    .unwrap();
    let set = BundleSet::default().with(Metric::Sbert, Arc::new(load_bundle(&encoder_dir).unwrap()));
    let run = run_dataset(&stsb_fixture(), None, &[Metric::Sbert, Metric::Bleu], &set, &options(1)).unwrap();
    assert_eq!(run.manifest.status, RunStatus::Partial);
    assert!(run.is_partial());
    assert_eq!(run.manifest.failures.len(), 3);
    assert!(run.manifest.failures.iter().all(|f| f.metric == Metric::Sbert));
    assert_eq!(run.manifest.rows.scored[&Metric::Bleu], 3);
    assert_eq!(run.manifest.rows.scored[&Metric::Sbert], 0);
}

#[test]
fn subset_and_source_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(&dir.path().join("bundles"));
    let data = dir.path().join("dev.tsv");
    let mut body = String::from("Quality\t#1 ID\t#2 ID\t#1 String\t#2 String\n");
    for p in binary_fixture().pairs {
        body.push_str(&format!(
            "{}\t{}\t{}x\t{}\t{}\n",
            p.label.value, p.pair.id, p.pair.id, p.pair.text_a, p.pair.text_b
        ));
    }
    fs::write(&data, body).unwrap();
    let source = DatasetSource::new(SourceKind::Mrpc, &data, "test");
    let opts = RunOptions {
        subset: Some(SubsetSpec {
            n: 6,
            seed: 11,
            stratify: true,
        }),
        ..options(1)
    };
    let run = run_benchmark(&source, &[Metric::Bleu], &set, &opts).unwrap();
    assert_eq!(run.manifest.rows.loaded, 12);
    assert_eq!(run.manifest.rows.evaluated, 6);
    assert_eq!(run.dataset.pairs.iter().filter(|p| p.label.value == 1.0).count(), 3);
    assert_eq!(run.manifest.dataset.source.as_ref(), Some(&source));
    assert_eq!(run.manifest.dataset.source_sha256.as_ref().map(String::len), Some(64));
    let again = run_benchmark(&source, &[Metric::Bleu], &set, &opts).unwrap();
    assert_eq!(run.dataset, again.dataset);
    assert_eq!(run.manifest.config_hash, again.manifest.config_hash);
}

#[test]
fn tables_from_fixture_runs() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(dir.path());
    let opts = RunOptions {
        length_split: true,
        ..options(2)
    };
    let stsb = run_dataset(&stsb_fixture(), None, &[Metric::Sts], &set, &opts).unwrap();
    let mrpc = run_dataset(&binary_fixture(), None, &[Metric::Sts], &set, &opts).unwrap();
    let table = summary_table(&[stsb.clone(), mrpc.clone()]).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].label, "STSScore");
    assert_eq!(table.rows[0].cells.len(), 4);
    assert_eq!(table.rows[0].cells[2].render(), "0.00 (0.00)");
    assert_eq!(table.rows[0].cells[3].render(), "1.00 (0.00)");
    let md = table.render(TableFormat::Markdown).unwrap();
    assert!(md.starts_with("| | STS-B r | STS-B ρ | MRPC neg | MRPC pos |"));

    let split = length_split_table(&[stsb.clone(), mrpc], Metric::Sts).unwrap();
    assert_eq!(
        split.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(),
        ["All", "Shorter", "Longer"]
    );
    let halves = stsb.summary.length_split.as_ref().unwrap();
    assert_eq!(halves.shorter.n + halves.longer.n, 3);
    assert!(split.rows[0].cells.iter().all(|c: &Cell| c.value.is_some()));

    assert!(matches!(summary_table(&[stsb.clone(), stsb]), Err(Error::IncompatibleRuns(_))));
}

#[test]
fn figures_for_graded_and_binary_runs() {
    let dir = tempfile::tempdir().unwrap();
    let set = bundles(&dir.path().join("bundles"));
    let stsb = run_dataset(&stsb_fixture(), None, &Metric::ALL, &set, &options(1)).unwrap();
    let files = emit_figures(&stsb, &dir.path().join("sts_figs")).unwrap();
    assert_eq!(files.len(), Metric::ALL.len());
    for (f, m) in files.iter().zip(Metric::ALL) {
        assert_eq!(f.file_name().unwrap().to_str().unwrap(), format!("scatter_{}.svg", m.as_str()));
        let svg = fs::read_to_string(f).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("identity"), "diagonal legend missing in {}", f.display());
    }

    let mrpc = run_dataset(&binary_fixture(), None, &[Metric::Sts, Metric::Bleu], &set, &options(1)).unwrap();
    let files = emit_figures(&mrpc, &dir.path().join("mrpc_figs")).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["density_bleu.svg", "density_sts.svg", "roc.svg"]);
    let density = fs::read_to_string(&files[1]).unwrap();
    assert!(density.contains("class 0") && density.contains("class 1"));
    let roc = fs::read_to_string(&files[2]).unwrap();
    assert!(roc.contains("STSScore (AUC = 1.00)"), "{roc}");

    let none = run_dataset(&stsb_fixture(), None, &[], &set, &options(1)).unwrap();
    assert!(emit_figures(&none, &dir.path().join("none")).unwrap().is_empty());
}
