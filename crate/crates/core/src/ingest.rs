//! Dataset loaders and the canonical pair-exchange format.
//!
//! Column names are matched case-insensitively:
//!
//! | format | id | text_a | text_b | label |
//! |---|---|---|---|---|
//! | STS-B (GLUE tsv) | `index` | `sentence1` | `sentence2` | `score` / `label` |
//! | STS-B (original, headerless) | row | column 6 | column 7 | column 5 |
//! | MRPC | `#1 id`-`#2 id` | `#1 string` / `sentence1` | `#2 string` / `sentence2` | `quality` / `label` |
//! | QQP | `id` | `question1` | `question2` | `is_duplicate` / `label` |
//! | WMT22 MQM (csv or tsv) | `system`:`seg_id` | `ref` / `reference` | `hyp` / `mt` / `target` | `score` / `mqm` |
//!
//! Tab-separated files are read without quote processing, as the GLUE
//! distributions require; comma-separated MQM files use standard CSV quoting.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    is_blank, validate_dataset, DatasetName, Label, LabelKind, LabeledDataset, LabeledPair, SentencePair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Stsb,
    Mrpc,
    Qqp,
    #[serde(rename = "wmt22_zh_en")]
    Wmt22ZhEn,
    CanonicalJsonl,
}

impl SourceKind {
    pub fn dataset_name(self) -> DatasetName {
        match self {
            SourceKind::Stsb => DatasetName::Stsb,
            SourceKind::Mrpc => DatasetName::Mrpc,
            SourceKind::Qqp => DatasetName::Qqp,
            SourceKind::Wmt22ZhEn => DatasetName::Wmt22ZhEn,
            SourceKind::CanonicalJsonl => DatasetName::Custom,
        }
    }

    /// Label kind produced by the loader; canonical files carry their own.
    pub fn label_kind(self) -> Option<LabelKind> {
        match self {
            SourceKind::Stsb => Some(LabelKind::Similarity0To5),
            SourceKind::Mrpc | SourceKind::Qqp => Some(LabelKind::Binary),
            SourceKind::Wmt22ZhEn => Some(LabelKind::Mqm),
            SourceKind::CanonicalJsonl => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub kind: SourceKind,
    pub path: PathBuf,
    pub split: String,
    /// Skip malformed rows (with a warning) instead of failing the load.
    #[serde(default)]
    pub lenient: bool,
}

impl DatasetSource {
    pub fn new(kind: SourceKind, path: impl Into<PathBuf>, split: impl Into<String>) -> Self {
        Self {
            kind,
            path: path.into(),
            split: split.into(),
            lenient: false,
        }
    }

    pub fn lenient(mut self, lenient: bool) -> Self {
        self.lenient = lenient;
        self
    }
}

struct RowError {
    line: usize,
    msg: String,
}

struct Builder<'a> {
    source: &'a DatasetSource,
    pairs: Vec<LabeledPair>,
    ids: HashSet<String>,
    skipped: usize,
}

impl<'a> Builder<'a> {
    fn new(source: &'a DatasetSource) -> Self {
        Self {
            source,
            pairs: Vec::new(),
            ids: HashSet::new(),
            skipped: 0,
        }
    }

    fn row(&mut self, row: std::result::Result<LabeledPair, RowError>) -> Result<()> {
        let checked = row.and_then(|p| {
            if !self.ids.insert(p.pair.id.clone()) {
                Err(RowError {
                    line: 0,
                    msg: format!("duplicate pair id {:?}", p.pair.id),
                })
            } else {
                Ok(p)
            }
        });
        match checked {
            Ok(p) => self.pairs.push(p),
            Err(e) if self.source.lenient => {
                log::warn!("{}:{}: skipping row: {}", self.source.path.display(), e.line, e.msg);
                self.skipped += 1;
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: self.source.path.clone(),
                    line: e.line,
                    msg: e.msg,
                })
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<LabeledDataset> {
        if self.skipped > 0 {
            log::warn!(
                "{}: kept {} rows, skipped {}",
                self.source.path.display(),
                self.pairs.len(),
                self.skipped
            );
        }
        let dataset = LabeledDataset {
            name: self.source.kind.dataset_name(),
            split: self.source.split.clone(),
            pairs: self.pairs,
        };
        debug_assert!(validate_dataset(&dataset).is_empty());
        Ok(dataset)
    }
}

fn make_pair(line: usize, id: String, a: &str, b: &str, label: Label) -> std::result::Result<LabeledPair, RowError> {
    let err = |msg: String| RowError { line, msg };
    if is_blank(a) {
        return Err(err("first text is empty".into()));
    }
    if is_blank(b) {
        return Err(err("second text is empty".into()));
    }
    if !label.is_valid() {
        return Err(err(format!("label {} outside the {} range", label.value, label.kind)));
    }
    Ok(LabeledPair {
        pair: SentencePair::new(id, a, b),
        label,
    })
}

fn parse_number(line: usize, field: &str, what: &str) -> std::result::Result<f64, RowError> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| RowError {
            line,
            msg: format!("{what} {field:?} is not a number"),
        })
}

fn parse_binary(line: usize, field: &str) -> std::result::Result<Label, RowError> {
    match field.trim() {
        "1" => Ok(Label::binary(true)),
        "0" => Ok(Label::binary(false)),
        other => Err(RowError {
            line,
            msg: format!("binary label {other:?} is not 0 or 1"),
        }),
    }
}

/// Tab-separated lines without quote handling, with 1-based line numbers.
fn tsv_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let file = fs::File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        let line = line.strip_prefix('\u{feff}').unwrap_or(&line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        rows.push((i + 1, line.split('\t').map(str::to_string).collect()));
    }
    Ok(rows)
}

struct Header(Vec<String>);

impl Header {
    fn new(fields: &[String]) -> Self {
        Self(fields.iter().map(|f| f.trim().to_lowercase()).collect())
    }

    fn find(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.0.iter().position(|c| c == n))
    }
}

fn field<'r>(row: &'r [String], idx: usize, line: usize) -> std::result::Result<&'r str, RowError> {
    row.get(idx).map(String::as_str).ok_or_else(|| RowError {
        line,
        msg: format!("row has {} fields, expected at least {}", row.len(), idx + 1),
    })
}

fn parse_error(source: &DatasetSource, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: source.path.clone(),
        line,
        msg: msg.into(),
    }
}

fn wrong_split(source: &DatasetSource) -> Error {
    Error::WrongSplit {
        dataset: source.kind.dataset_name().display_name().to_string(),
        split: source.split.clone(),
    }
}

fn load_stsb(source: &DatasetSource) -> Result<LabeledDataset> {
    let rows = tsv_lines(&source.path)?;
    let mut b = Builder::new(source);
    let Some((first_line, first)) = rows.first() else {
        return b.finish();
    };
    let header = Header::new(first);
    if header.find(&["sentence1"]).is_some() {
        let col = |names: &[&str], what: &str| {
            header
                .find(names)
                .ok_or_else(|| parse_error(source, *first_line, format!("header has no {what} column")))
        };
        let (a, bcol) = (col(&["sentence1"], "sentence1")?, col(&["sentence2"], "sentence2")?);
        let label = header.find(&["score", "label"]).ok_or_else(|| wrong_split(source))?;
        let id = header.find(&["index", "id", "idx"]);
        for (row_no, (line, row)) in rows.iter().enumerate().skip(1) {
            let pair = (|| {
                let id = match id {
                    Some(i) => field(row, i, *line)?.trim().to_string(),
                    None => (row_no - 1).to_string(),
                };
                let value = parse_number(*line, field(row, label, *line)?, "similarity score")?;
                make_pair(*line, id, field(row, a, *line)?, field(row, bcol, *line)?, Label::similarity(value))
            })();
            b.row(pair)?;
        }
    } else {
        // original benchmark layout: genre, file, year, id, score, sentence1, sentence2[, ...]
        for (row_no, (line, row)) in rows.iter().enumerate() {
            let pair = (|| {
                let value = parse_number(*line, field(row, 4, *line)?, "similarity score")?;
                make_pair(
                    *line,
                    row_no.to_string(),
                    field(row, 5, *line)?,
                    field(row, 6, *line)?,
                    Label::similarity(value),
                )
            })();
            b.row(pair)?;
        }
    }
    b.finish()
}

fn load_mrpc(source: &DatasetSource) -> Result<LabeledDataset> {
    let rows = tsv_lines(&source.path)?;
    let mut b = Builder::new(source);
    let Some((first_line, first)) = rows.first() else {
        return b.finish();
    };
    let header = Header::new(first);
    let col = |names: &[&str]| {
        header
            .find(names)
            .ok_or_else(|| parse_error(source, *first_line, format!("header has no {} column", names[0])))
    };
    let a = col(&["#1 string", "sentence1"])?;
    let bcol = col(&["#2 string", "sentence2"])?;
    let label = header.find(&["quality", "label"]).ok_or_else(|| wrong_split(source))?;
    let ids = (header.find(&["#1 id"]), header.find(&["#2 id"]));
    let index = header.find(&["index", "idx", "id"]);
    for (row_no, (line, row)) in rows.iter().enumerate().skip(1) {
        let pair = (|| {
            let id = match (ids, index) {
                ((Some(i), Some(j)), _) => {
                    format!("{}-{}", field(row, i, *line)?.trim(), field(row, j, *line)?.trim())
                }
                (_, Some(i)) => field(row, i, *line)?.trim().to_string(),
                _ => (row_no - 1).to_string(),
            };
            let label = parse_binary(*line, field(row, label, *line)?)?;
            make_pair(*line, id, field(row, a, *line)?, field(row, bcol, *line)?, label)
        })();
        b.row(pair)?;
    }
    b.finish()
}

fn load_qqp(source: &DatasetSource) -> Result<LabeledDataset> {
    if source.split.eq_ignore_ascii_case("test") {
        return Err(wrong_split(source));
    }
    let rows = tsv_lines(&source.path)?;
    let mut b = Builder::new(source);
    let Some((first_line, first)) = rows.first() else {
        return b.finish();
    };
    let header = Header::new(first);
    let col = |names: &[&str]| {
        header
            .find(names)
            .ok_or_else(|| parse_error(source, *first_line, format!("header has no {} column", names[0])))
    };
    let a = col(&["question1"])?;
    let bcol = col(&["question2"])?;
    let label = header.find(&["is_duplicate", "label"]).ok_or_else(|| wrong_split(source))?;
    let id = header.find(&["id", "idx"]);
    for (row_no, (line, row)) in rows.iter().enumerate().skip(1) {
        let pair = (|| {
            let id = match id {
                Some(i) => field(row, i, *line)?.trim().to_string(),
                None => (row_no - 1).to_string(),
            };
            let label = parse_binary(*line, field(row, label, *line)?)?;
            make_pair(*line, id, field(row, a, *line)?, field(row, bcol, *line)?, label)
        })();
        b.row(pair)?;
    }
    b.finish()
}

fn load_wmt(source: &DatasetSource) -> Result<LabeledDataset> {
    let text = fs::read_to_string(&source.path)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let first = text.lines().next().unwrap_or("");
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .quoting(delimiter == b',')
        .flexible(true)
        .has_headers(false)
        .from_reader(text.as_bytes());

    let mut b = Builder::new(source);
    let mut records = reader.records();
    let Some(header) = records.next().transpose()? else {
        return b.finish();
    };
    let header = Header::new(&header.iter().map(str::to_string).collect::<Vec<_>>());
    let col = |names: &[&str]| {
        header
            .find(names)
            .ok_or_else(|| parse_error(source, 1, format!("header has no {} column", names[0])))
    };
    let reference = col(&["ref", "reference", "ref_text", "reference_translation"])?;
    let hypothesis = col(&["hyp", "mt", "target", "translation", "system_output", "hypothesis"])?;
    let score = header.find(&["score", "mqm", "mqm_score"]).ok_or_else(|| wrong_split(source))?;
    let system = header.find(&["system", "sys", "system_name"]);
    let segment = header.find(&["seg_id", "segment_id", "segment", "id"]);

    for (row_no, record) in records.enumerate() {
        let record = record?;
        let line = record.position().map_or(row_no + 2, |p| p.line() as usize);
        let row: Vec<String> = record.iter().map(str::to_string).collect();
        let pair = (|| {
            let id = match (system, segment) {
                (Some(s), Some(g)) => format!("{}:{}", field(&row, s, line)?.trim(), field(&row, g, line)?.trim()),
                (None, Some(g)) => field(&row, g, line)?.trim().to_string(),
                _ => row_no.to_string(),
            };
            let value = parse_number(line, field(&row, score, line)?, "MQM score")?;
            make_pair(
                line,
                id,
                field(&row, reference, line)?,
                field(&row, hypothesis, line)?,
                Label::mqm(value),
            )
        })();
        b.row(pair)?;
    }
    b.finish()
}

/// Loads a dataset, checking every row against the label and text invariants.
pub fn load_dataset(source: &DatasetSource) -> Result<LabeledDataset> {
    if !source.path.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset file {} not found", source.path.display()),
        )));
    }
    match source.kind {
        SourceKind::Stsb => load_stsb(source),
        SourceKind::Mrpc => load_mrpc(source),
        SourceKind::Qqp => load_qqp(source),
        SourceKind::Wmt22ZhEn => load_wmt(source),
        SourceKind::CanonicalJsonl => {
            let records = read_canonical_jsonl(&source.path)?;
            let dataset = from_canonical(&records, DatasetName::Custom)?;
            match validate_dataset(&dataset).into_iter().next() {
                Some(v) => Err(Error::Schema {
                    field: "id/text/label".into(),
                    msg: v.to_string(),
                }),
                None => Ok(dataset),
            }
        }
    }
}

/// One line of the canonical JSONL exchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub id: String,
    pub text_a: String,
    pub text_b: String,
    pub label_kind: LabelKind,
    pub label: f64,
    pub split: String,
}

pub fn to_canonical(dataset: &LabeledDataset) -> Vec<CanonicalRecord> {
    dataset
        .pairs
        .iter()
        .map(|p| CanonicalRecord {
            id: p.pair.id.clone(),
            text_a: p.pair.text_a.clone(),
            text_b: p.pair.text_b.clone(),
            label_kind: p.label.kind,
            label: p.label.value,
            split: dataset.split.clone(),
        })
        .collect()
}

pub fn from_canonical(records: &[CanonicalRecord], name: DatasetName) -> Result<LabeledDataset> {
    let split = records.first().map(|r| r.split.clone()).unwrap_or_default();
    if let Some(r) = records.iter().find(|r| r.split != split) {
        return Err(Error::Schema {
            field: "split".into(),
            msg: format!("record {:?} has split {:?}, expected {split:?}", r.id, r.split),
        });
    }
    Ok(LabeledDataset {
        name,
        split,
        pairs: records
            .iter()
            .map(|r| LabeledPair {
                pair: SentencePair::new(r.id.clone(), r.text_a.clone(), r.text_b.clone()),
                label: Label {
                    kind: r.label_kind,
                    value: r.label,
                },
            })
            .collect(),
    })
}

/// Parses one canonical line, naming the offending field on failure.
pub fn parse_canonical_line(line: &str) -> Result<CanonicalRecord> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Schema {
        field: "<record>".into(),
        msg: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Schema {
        field: "<record>".into(),
        msg: "record is not a JSON object".into(),
    })?;
    let text = |name: &str| -> Result<String> {
        match obj.get(name) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(Error::Schema {
                field: name.into(),
                msg: "expected a string".into(),
            }),
            None => Err(Error::Schema {
                field: name.into(),
                msg: "missing".into(),
            }),
        }
    };
    let id = text("id")?;
    let text_a = text("text_a")?;
    let text_b = text("text_b")?;
    let label_kind = text("label_kind")?.parse::<LabelKind>().map_err(|msg| Error::Schema {
        field: "label_kind".into(),
        msg,
    })?;
    let label = match obj.get("label") {
        Some(v) => v.as_f64().ok_or_else(|| Error::Schema {
            field: "label".into(),
            msg: "expected a number".into(),
        })?,
        None => {
            return Err(Error::Schema {
                field: "label".into(),
                msg: "missing".into(),
            })
        }
    };
    let split = text("split")?;
    Ok(CanonicalRecord {
        id,
        text_a,
        text_b,
        label_kind,
        label,
        split,
    })
}

pub fn read_canonical_jsonl(path: &Path) -> Result<Vec<CanonicalRecord>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_canonical_line(&line).map_err(|e| match e {
            Error::Schema { field, msg } => Error::Schema {
                field,
                msg: format!("{}:{}: {msg}", path.display(), i + 1),
            },
            other => other,
        })?);
    }
    Ok(out)
}

pub fn write_canonical_jsonl<W: Write>(mut writer: W, dataset: &LabeledDataset) -> Result<()> {
    for record in to_canonical(dataset) {
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Seeded subsample of `n` pairs in original order. With `stratify`, each
/// binary class keeps its share of the dataset (within one pair).
pub fn subset(dataset: &LabeledDataset, n: usize, seed: u64, stratify: bool) -> Result<LabeledDataset> {
    let len = dataset.len();
    if n == 0 || n > len {
        return Err(Error::SubsetRange { n, len });
    }
    if stratify && dataset.label_kind() != Some(LabelKind::Binary) {
        return Err(Error::StratifyNonBinary);
    }
    if n == len {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if stratify {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..len).partition(|&i| dataset.pairs[i].label.value == 1.0);
        // round-half-up share for the positive class, kept feasible for both classes
        let ideal = (2 * n * pos.len() + len) / (2 * len);
        let quota_pos = ideal.clamp(n.saturating_sub(neg.len()), pos.len().min(n));
        let mut picked = Vec::with_capacity(n);
        for (members, quota) in [(&pos, quota_pos), (&neg, n - quota_pos)] {
            picked.extend(sample(&mut rng, members.len(), quota).into_iter().map(|k| members[k]));
        }
        picked
    } else {
        sample(&mut rng, len, n).into_vec()
    };
    chosen.sort_unstable();
    Ok(dataset.with_pairs(chosen.into_iter().map(|i| dataset.pairs[i].clone()).collect()))
}
