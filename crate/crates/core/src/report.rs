//! Summary tables.
//!
//! Rows are metrics; each dataset contributes two columns: `r` and `ρ` for
//! graded labels, `neg` and `pos` class means (standard deviation in
//! brackets) for binary labels. Values are rounded half-up to two decimals.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::run::{BenchmarkRun, MetricSummary, RunSummary};
use crate::types::{DatasetName, LabelKind, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "md" | "markdown" => Ok(TableFormat::Markdown),
            other => Err(format!("unknown table format {other:?} (expected csv, json or md)")),
        }
    }
}

/// Rounds half away from zero to `digits` decimals using the shortest
/// decimal representation of `x`, so `0.895` renders as `"0.90"`.
pub fn round_half_up(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return "n/a".to_string();
    }
    // the shortest round-trip decimal is what a reader sees as the value
    let repr = format!("{}", x.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    let mut kept: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    kept.extend((0..digits).map(|i| frac.get(i).copied().unwrap_or(0)));
    if frac.get(digits).is_some_and(|&d| d >= 5) {
        let mut i = kept.len();
        loop {
            if i == 0 {
                kept.insert(0, 1);
                break;
            }
            i -= 1;
            if kept[i] == 9 {
                kept[i] = 0;
            } else {
                kept[i] += 1;
                break;
            }
        }
    }
    let int_len = kept.len() - digits;
    let mut out = String::new();
    let is_zero = kept.iter().all(|&d| d == 0);
    if x < 0.0 && !is_zero {
        out.push('-');
    }
    for (i, d) in kept.iter().enumerate() {
        if i == int_len && digits > 0 {
            out.push('.');
        }
        out.push((b'0' + d) as char);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub value: Option<f64>,
    /// Standard deviation shown in brackets for class means.
    pub std: Option<f64>,
}

impl Cell {
    const EMPTY: Cell = Cell { value: None, std: None };

    pub fn render(&self) -> String {
        match (self.value, self.std) {
            (None, _) => "-".to_string(),
            (Some(v), None) => round_half_up(v, 2),
            (Some(v), Some(s)) => format!("{} ({})", round_half_up(v, 2), round_half_up(s, 2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnGroup {
    pub dataset: String,
    pub label_kind: Option<LabelKind>,
    pub headers: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub groups: Vec<ColumnGroup>,
    pub rows: Vec<TableRow>,
}

fn group_for(summary: &RunSummary) -> ColumnGroup {
    let headers = match summary.label_kind {
        Some(LabelKind::Binary) => ["neg".to_string(), "pos".to_string()],
        _ => ["r".to_string(), "ρ".to_string()],
    };
    let dataset = match summary.dataset {
        DatasetName::Custom => format!("{} ({})", summary.dataset.display_name(), summary.split),
        name => name.display_name().to_string(),
    };
    ColumnGroup {
        dataset,
        label_kind: summary.label_kind,
        headers,
    }
}

fn cells_for(summary: Option<&MetricSummary>) -> [Cell; 2] {
    match summary {
        Some(MetricSummary::Correlation(c)) => [
            Cell {
                value: c.pearson_r,
                std: None,
            },
            Cell {
                value: c.spearman_rho,
                std: None,
            },
        ],
        Some(MetricSummary::Classes { negative, positive, .. }) => [
            Cell {
                value: Some(negative.mean),
                std: Some(negative.std),
            },
            Cell {
                value: Some(positive.mean),
                std: Some(positive.std),
            },
        ],
        _ => [Cell::EMPTY, Cell::EMPTY],
    }
}

fn check_compatible(summaries: &[&RunSummary]) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::IncompatibleRuns("no runs given".into()));
    }
    let mut seen = BTreeSet::new();
    for s in summaries {
        if s.label_kind.is_none() {
            return Err(Error::IncompatibleRuns(format!(
                "run on {} {} has no labels",
                s.dataset, s.split
            )));
        }
        if !seen.insert((s.dataset.as_str(), s.split.as_str())) {
            return Err(Error::IncompatibleRuns(format!(
                "two runs cover {} {}; tabulate them separately",
                s.dataset, s.split
            )));
        }
    }
    Ok(())
}

/// Metric rows by dataset column groups, from run summaries only.
pub fn summary_table_from(summaries: &[&RunSummary]) -> Result<SummaryTable> {
    check_compatible(summaries)?;
    let metrics: BTreeSet<Metric> = summaries.iter().flat_map(|s| s.metrics.keys().copied()).collect();
    Ok(SummaryTable {
        groups: summaries.iter().map(|s| group_for(s)).collect(),
        rows: metrics
            .into_iter()
            .map(|m| TableRow {
                label: m.display_name().to_string(),
                cells: summaries.iter().flat_map(|s| cells_for(s.metrics.get(&m))).collect(),
            })
            .collect(),
    })
}

pub fn summary_table(runs: &[BenchmarkRun]) -> Result<SummaryTable> {
    summary_table_from(&runs.iter().map(|r| &r.summary).collect::<Vec<_>>())
}

/// One metric on all pairs and on the two halves of the median length split,
/// rows `All`, `Shorter` and `Longer`.
pub fn length_split_table(runs: &[BenchmarkRun], metric: Metric) -> Result<SummaryTable> {
    let summaries: Vec<&RunSummary> = runs.iter().map(|r| &r.summary).collect();
    check_compatible(&summaries)?;
    let mut rows = vec![
        TableRow {
            label: "All".into(),
            cells: Vec::new(),
        },
        TableRow {
            label: "Shorter".into(),
            cells: Vec::new(),
        },
        TableRow {
            label: "Longer".into(),
            cells: Vec::new(),
        },
    ];
    for s in &summaries {
        let split = s.length_split.as_ref().ok_or_else(|| {
            Error::IncompatibleRuns(format!("run on {} {} has no length split", s.dataset, s.split))
        })?;
        rows[0].cells.extend(cells_for(s.metrics.get(&metric)));
        rows[1].cells.extend(cells_for(split.shorter.metrics.get(&metric)));
        rows[2].cells.extend(cells_for(split.longer.metrics.get(&metric)));
    }
    Ok(SummaryTable {
        groups: summaries.iter().map(|s| group_for(s)).collect(),
        rows,
    })
}

/// AUC per metric for binary-labelled runs: rows are metrics, one column per run.
pub fn auc_table(runs: &[BenchmarkRun]) -> Vec<(Metric, Vec<Option<f64>>)> {
    let binary: Vec<&BenchmarkRun> = runs
        .iter()
        .filter(|r| r.summary.label_kind == Some(LabelKind::Binary))
        .collect();
    let metrics: BTreeSet<Metric> = binary.iter().flat_map(|r| r.summary.metrics.keys().copied()).collect();
    metrics
        .into_iter()
        .map(|m| {
            (
                m,
                binary
                    .iter()
                    .map(|r| r.summary.metrics.get(&m).and_then(|s| s.roc()).map(|roc| roc.auc))
                    .collect(),
            )
        })
        .collect()
}

impl SummaryTable {
    fn header_cells(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| g.headers.iter().map(move |h| format!("{} {h}", g.dataset)))
            .collect()
    }

    pub fn render(&self, format: TableFormat) -> Result<String> {
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::Json => self.to_json(),
            TableFormat::Markdown => Ok(self.to_markdown()),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.header_cells());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.label.clone()];
            record.extend(row.cells.iter().map(Cell::render));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct RenderedRow<'a> {
            label: &'a str,
            cells: &'a [Cell],
            rendered: Vec<String>,
        }
        #[derive(Serialize)]
        struct Rendered<'a> {
            groups: &'a [ColumnGroup],
            rows: Vec<RenderedRow<'a>>,
        }
        let doc = Rendered {
            groups: &self.groups,
            rows: self
                .rows
                .iter()
                .map(|r| RenderedRow {
                    label: &r.label,
                    cells: &r.cells,
                    rendered: r.cells.iter().map(Cell::render).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let header = self.header_cells();
        let _ = writeln!(out, "| | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(header.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.cells.iter().map(Cell::render).collect();
            let _ = writeln!(out, "| {} | {} |", row.label, cells.join(" | "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::stats::{ClassSummary, CorrelationReport, RocResult};

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(0.895, 2), "0.90");
        assert_eq!(round_half_up(0.894999, 2), "0.89");
        assert_eq!(round_half_up(0.125, 2), "0.13");
        assert_eq!(round_half_up(0.135, 2), "0.14");
        assert_eq!(round_half_up(0.9, 2), "0.90");
        assert_eq!(round_half_up(0.999, 2), "1.00");
        assert_eq!(round_half_up(9.995, 2), "10.00");
        assert_eq!(round_half_up(1.0, 2), "1.00");
        assert_eq!(round_half_up(0.0, 2), "0.00");
        assert_eq!(round_half_up(-0.895, 2), "-0.90");
        assert_eq!(round_half_up(-0.001, 2), "0.00");
        assert_eq!(round_half_up(1e-20, 2), "0.00");
        assert_eq!(round_half_up(f64::NAN, 2), "n/a");
    }

    fn corr(r: f64, rho: f64) -> MetricSummary {
        MetricSummary::Correlation(CorrelationReport {
            pearson_r: Some(r),
            spearman_rho: Some(rho),
            n: 10,
        })
    }

    fn classes(neg: (f64, f64), pos: (f64, f64)) -> MetricSummary {
        MetricSummary::Classes {
            negative: ClassSummary {
                class_label: 0,
                mean: neg.0,
                std: neg.1,
                n: 5,
            },
            positive: ClassSummary {
                class_label: 1,
                mean: pos.0,
                std: pos.1,
                n: 5,
            },
            roc: RocResult {
                points: vec![(0.0, 0.0), (1.0, 1.0)],
                auc: 0.5,
            },
        }
    }

    fn summary(dataset: DatasetName, kind: LabelKind, metrics: Vec<(Metric, MetricSummary)>) -> RunSummary {
        RunSummary {
            dataset,
            split: "test".into(),
            label_kind: Some(kind),
            metrics: metrics.into_iter().collect::<BTreeMap<_, _>>(),
            length_split: None,
        }
    }

    #[test]
    fn table_layout() {
        let stsb = summary(
            DatasetName::Stsb,
            LabelKind::Similarity0To5,
            vec![(Metric::Sts, corr(0.895, 0.8899)), (Metric::Bleu, corr(0.34, 0.32))],
        );
        let mrpc = summary(
            DatasetName::Mrpc,
            LabelKind::Binary,
            vec![(Metric::Sts, classes((0.61, 0.18), (0.84, 0.13)))],
        );
        let table = summary_table_from(&[&stsb, &mrpc]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].label, "BLEU");
        assert_eq!(table.rows[1].label, "STSScore");
        let rendered: Vec<String> = table.rows[1].cells.iter().map(Cell::render).collect();
        assert_eq!(rendered, ["0.90", "0.89", "0.61 (0.18)", "0.84 (0.13)"]);
        let bleu: Vec<String> = table.rows[0].cells.iter().map(Cell::render).collect();
        assert_eq!(bleu, ["0.34", "0.32", "-", "-"]);

        let csv = table.to_csv().unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "metric,STS-B r,STS-B ρ,MRPC neg,MRPC pos"
        );
        assert!(csv.contains("STSScore,0.90,0.89,0.61 (0.18),0.84 (0.13)"));
        let md = table.to_markdown();
        assert!(md.contains("| STSScore | 0.90 | 0.89 | 0.61 (0.18) | 0.84 (0.13) |"));
        let json: serde_json::Value = serde_json::from_str(&table.to_json().unwrap()).unwrap();
        assert_eq!(json["rows"][1]["rendered"][0], "0.90");
    }

    #[test]
    fn incompatible_mixes() {
        let a = summary(DatasetName::Stsb, LabelKind::Similarity0To5, vec![(Metric::Sts, corr(0.9, 0.9))]);
        assert!(matches!(summary_table_from(&[]), Err(Error::IncompatibleRuns(_))));
        assert!(matches!(summary_table_from(&[&a, &a]), Err(Error::IncompatibleRuns(_))));
    }
}
