//! Vector figures for a run.
//!
//! Graded datasets get one scatter per metric, gold label (rescaled to
//! `[0, 1]`) against score with the identity diagonal. Binary datasets get a
//! per-metric density plot with one curve per class and a single ROC panel
//! with the AUC of every metric in the legend.
//!
//! Densities use a Gaussian kernel with Scott's bandwidth,
//! `h = σ · n^(-1/5)` with the sample standard deviation `σ`.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::run::BenchmarkRun;
use crate::stats::sample_std;
use crate::types::{LabelKind, Metric};

const SIZE: (u32, u32) = (640, 480);
const GRID_POINTS: usize = 201;
const PALETTE: [RGBColor; 5] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
];

fn render_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Render(e.to_string())
}

/// Scott's rule bandwidth; degenerate samples fall back to a narrow kernel.
pub fn scott_bandwidth(xs: &[f64]) -> f64 {
    let h = sample_std(xs) * (xs.len() as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        0.02
    }
}

/// Gaussian kernel density estimate evaluated at `grid`.
pub fn gaussian_kde(xs: &[f64], grid: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return vec![0.0; grid.len()];
    }
    let h = scott_bandwidth(xs);
    let norm = 1.0 / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| norm * xs.iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum::<f64>())
        .collect()
}

/// Maps gold labels onto `[0, 1]`: similarity labels are divided by five,
/// MQM scores are min-max scaled.
pub fn rescale_labels(kind: LabelKind, labels: &[f64]) -> Vec<f64> {
    match kind {
        LabelKind::Similarity0To5 => labels.iter().map(|l| l / 5.0).collect(),
        LabelKind::Binary => labels.to_vec(),
        LabelKind::Mqm => {
            let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                labels.iter().map(|l| (l - lo) / (hi - lo)).collect()
            } else {
                vec![0.5; labels.len()]
            }
        }
    }
}

fn value_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(0.0f64, f64::min);
    let hi = values.iter().copied().fold(1.0f64, f64::max);
    (lo, hi)
}

fn scatter(path: &Path, title: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    let (ylo, yhi) = value_range(ys);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(render_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..1.0, ylo..yhi)
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .x_desc("label (rescaled)")
        .y_desc("similarity")
        .draw()
        .map_err(render_err)?;
    chart
        .draw_series(
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| Circle::new((x, y), 2, PALETTE[0].mix(0.5).filled())),
        )
        .map_err(render_err)?;
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], BLACK.stroke_width(2)))
        .map_err(render_err)?
        .label("identity")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLACK));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)
}

fn densities(path: &Path, title: &str, negatives: &[f64], positives: &[f64]) -> Result<()> {
    let all: Vec<f64> = negatives.iter().chain(positives).copied().collect();
    let (lo, hi) = value_range(&all);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let curves = [
        ("class 0", gaussian_kde(negatives, &grid), PALETTE[0]),
        ("class 1", gaussian_kde(positives, &grid), PALETTE[1]),
    ];
    let ymax = curves
        .iter()
        .flat_map(|(_, d, _)| d.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(render_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(lo..hi, 0.0..ymax)
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .x_desc("similarity")
        .y_desc("density")
        .draw()
        .map_err(render_err)?;
    for (label, density, color) in curves {
        chart
            .draw_series(LineSeries::new(
                grid.iter().copied().zip(density),
                color.stroke_width(2),
            ))
            .map_err(render_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)
}

fn roc_panel(path: &Path, title: &str, curves: &[(Metric, Vec<(f64, f64)>, f64)]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(render_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)
        .map_err(render_err)?;
    chart
        .configure_mesh()
        .x_desc("false positive rate")
        .y_desc("true positive rate")
        .draw()
        .map_err(render_err)?;
    for (i, (metric, points, auc)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(render_err)?
            .label(format!("{} (AUC = {:.2})", metric.display_name(), auc))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], BLACK.mix(0.4)))
        .map_err(render_err)?;
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(render_err)?;
    root.present().map_err(render_err)
}

/// Writes the figures for `run` into `out_dir` and returns their paths.
pub fn emit_figures(run: &BenchmarkRun, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let metrics = run.metrics();
    let Some(kind) = run.summary.label_kind else {
        return Ok(Vec::new());
    };
    if metrics.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir)?;
    let dataset = run.summary.dataset.display_name();
    let mut written = Vec::new();
    match kind {
        LabelKind::Similarity0To5 | LabelKind::Mqm => {
            for &metric in metrics {
                let (labels, scores) = run.labelled_scores(metric);
                let path = out_dir.join(format!("scatter_{}.svg", metric.as_str()));
                scatter(
                    &path,
                    &format!("{dataset}: {}", metric.display_name()),
                    &rescale_labels(kind, &labels),
                    &scores,
                )?;
                written.push(path);
            }
        }
        LabelKind::Binary => {
            let mut curves = Vec::new();
            for &metric in metrics {
                let (labels, scores) = run.labelled_scores(metric);
                let (pos, neg): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
                    labels.iter().copied().zip(scores).partition(|(l, _)| *l == 1.0);
                let path = out_dir.join(format!("density_{}.svg", metric.as_str()));
                densities(
                    &path,
                    &format!("{dataset}: {}", metric.display_name()),
                    &neg.iter().map(|p| p.1).collect::<Vec<_>>(),
                    &pos.iter().map(|p| p.1).collect::<Vec<_>>(),
                )?;
                written.push(path);
                if let Some(roc) = run.summary.metrics.get(&metric).and_then(|s| s.roc()) {
                    curves.push((metric, roc.points.clone(), roc.auc));
                }
            }
            let path = out_dir.join("roc.svg");
            roc_panel(&path, &format!("{dataset}: ROC"), &curves)?;
            written.push(path);
        }
    }
    Ok(written)
}
