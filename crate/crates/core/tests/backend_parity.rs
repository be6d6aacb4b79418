//! The ONNX runtime path reproduces reference outputs recorded from PyTorch
//! for two miniature randomly initialised BERT bundles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use stsscore::backend::{
    encode_tokens, encode_tokens_batch, load_bundle, run_regression, run_regression_batch, tokenize_pair,
    tokenize_text, write_fingerprint,
};
use stsscore::Error;

const LOGIT_TOL: f64 = 1e-4;
const HIDDEN_TOL: f64 = 1e-4;

#[derive(Deserialize)]
struct Expected {
    pairs: Vec<PairCase>,
    texts: Vec<TextCase>,
}

#[derive(Deserialize)]
struct PairCase {
    text_a: String,
    text_b: String,
    ids: Vec<u32>,
    logit: f64,
}

#[derive(Deserialize)]
struct TextCase {
    text: String,
    ids: Vec<u32>,
    special: Vec<u8>,
    last: Vec<Vec<f64>>,
    layer_1: Vec<Vec<f64>>,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_bundles")
}

fn expected() -> Expected {
    serde_json::from_str(&fs::read_to_string(fixtures().join("expected.json")).unwrap()).unwrap()
}

fn copy_bundle(name: &str, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(fixtures().join(name)).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

fn assert_matrix_close(got: &[Vec<f64>], want: &[Vec<f64>], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (r, (g, w)) in got.iter().zip(want).enumerate() {
        assert_eq!(g.len(), w.len());
        for (c, (x, y)) in g.iter().zip(w).enumerate() {
            assert!((x - y).abs() <= tol, "row {r} col {c}: {x} vs {y}");
        }
    }
}

#[test]
fn pair_token_ids_match_reference() {
    let bundle = load_bundle(fixtures().join("regression")).unwrap();
    for case in expected().pairs {
        let enc = tokenize_pair(&bundle, &case.text_a, &case.text_b).unwrap();
        assert_eq!(enc.token_ids, case.ids, "{} / {}", case.text_a, case.text_b);
        assert!(enc.pair_boundary.is_some());
    }
}

#[test]
fn regression_logits_match_reference() {
    let bundle = load_bundle(fixtures().join("regression")).unwrap();
    for case in expected().pairs {
        let enc = tokenize_pair(&bundle, &case.text_a, &case.text_b).unwrap();
        let logit = run_regression(&bundle, &enc).unwrap();
        assert!((logit - case.logit).abs() <= LOGIT_TOL, "{logit} vs {}", case.logit);
    }
}

#[test]
fn regression_is_batch_size_invariant() {
    let cases = expected().pairs;
    let dir = fixtures().join("regression");
    let single = load_bundle(&dir).unwrap().with_batch_size(1);
    let inputs: Vec<_> = cases
        .iter()
        .map(|c| tokenize_pair(&single, &c.text_a, &c.text_b).unwrap())
        .collect();
    let reference = run_regression_batch(&single, &inputs).unwrap();
    assert_eq!(single.inference_calls(), inputs.len() as u64);
    for batch in [2, 4, 32] {
        let bundle = load_bundle(&dir).unwrap().with_batch_size(batch);
        let logits = run_regression_batch(&bundle, &inputs).unwrap();
        for (a, b) in logits.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-6, "batch {batch}: {a} vs {b}");
        }
    }
}

#[test]
fn encoder_last_layer_matches_reference() {
    let bundle = load_bundle(fixtures().join("encoder")).unwrap();
    for case in expected().texts {
        let enc = tokenize_text(&bundle, &case.text).unwrap();
        assert_eq!(enc.token_ids, case.ids);
        let flags: Vec<bool> = case.special.iter().map(|&s| s == 1).collect();
        assert_eq!(enc.special_tokens, flags);
        let emb = encode_tokens(&bundle, &case.text).unwrap();
        assert_eq!(emb.special_token_flags, flags);
        assert_matrix_close(&emb.vectors, &case.last, HIDDEN_TOL);
    }
}

#[test]
fn encoder_intermediate_layer_matches_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("encoder");
    copy_bundle("encoder", &dir);
    let config_path = dir.join("bundle.json");
    let mut config: serde_json::Value = serde_json::from_str(&fs::read_to_string(&config_path).unwrap()).unwrap();
    config["embedding_layer"] = serde_json::json!(1);
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    write_fingerprint(&dir).unwrap();

    let bundle = load_bundle(&dir).unwrap();
    for case in expected().texts {
        let emb = encode_tokens(&bundle, &case.text).unwrap();
        assert_matrix_close(&emb.vectors, &case.layer_1, HIDDEN_TOL);
    }
}

#[test]
fn encoder_batches_with_padding_match_single_texts() {
    let cases = expected().texts;
    let texts: Vec<&str> = cases.iter().map(|c| c.text.as_str()).collect();
    let dir = fixtures().join("encoder");
    let single = load_bundle(&dir).unwrap().with_batch_size(1);
    let batched = load_bundle(&dir).unwrap().with_batch_size(texts.len());
    let a = encode_tokens_batch(&single, &texts).unwrap();
    let b = encode_tokens_batch(&batched, &texts).unwrap();
    assert_eq!(batched.inference_calls(), 1);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.token_ids, y.token_ids);
        assert_matrix_close(&x.vectors, &y.vectors, 1e-6);
    }
}

#[test]
fn long_inputs_are_truncated_to_max_len() {
    let bundle = load_bundle(fixtures().join("regression")).unwrap();
    let max_len = bundle.max_len();
    let words = ["the", "cat", "sits", "in", "garden", "a", "dog", "runs"];
    for n in [1usize, 7, 15, 16, 17, 40, 200] {
        let long: String = (0..n).map(|i| words[i % words.len()]).collect::<Vec<_>>().join(" ");
        let enc = tokenize_pair(&bundle, &long, "a cat").unwrap();
        assert!(enc.len() <= max_len, "{n} words gave {} tokens", enc.len());
        assert!(run_regression(&bundle, &enc).unwrap().is_finite());
        let enc = tokenize_pair(&bundle, "a cat", &long).unwrap();
        assert!(enc.len() <= max_len);
    }
    let encoder = load_bundle(fixtures().join("encoder")).unwrap();
    let long = vec!["garden"; 300].join(" ");
    let emb = encode_tokens(&encoder, &long).unwrap();
    assert!(emb.len() <= encoder.max_len());
}

#[test]
fn tampered_graph_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("regression");
    copy_bundle("regression", &dir);
    let graph = dir.join("model.onnx");
    let mut bytes = fs::read(&graph).unwrap();
    bytes.push(0);
    fs::write(&graph, bytes).unwrap();
    assert!(matches!(load_bundle(&dir), Err(Error::FingerprintMismatch { .. })));
}

#[test]
fn missing_bundle_files_are_reported() {
    for file in ["tokenizer.json", "bundle.json", "model.onnx", "fingerprint.txt"] {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("encoder");
        copy_bundle("encoder", &dir);
        fs::remove_file(dir.join(file)).unwrap();
        match load_bundle(&dir) {
            Err(Error::MissingFile(path)) => assert!(path.ends_with(file), "{path:?}"),
            other => panic!("{file}: unexpected {other:?}"),
        }
    }
}

#[test]
fn kind_mismatch_is_an_error() {
    let encoder = load_bundle(fixtures().join("encoder")).unwrap();
    let regression = load_bundle(fixtures().join("regression")).unwrap();
    let enc = tokenize_pair(&regression, "a cat", "a dog").unwrap();
    assert!(matches!(run_regression(&encoder, &enc), Err(Error::WrongBundleKind { .. })));
    assert!(matches!(encode_tokens(&regression, "a cat"), Err(Error::WrongBundleKind { .. })));
}
