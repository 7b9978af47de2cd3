//! Report directory: `results.csv`, `ttest.csv`, `cka.csv`, `smoothing.csv`
//! and two SVG charts, all derived from a persisted protocol result.

use std::path::Path;

use surrogate_core::adapt::Modality;
use surrogate_core::data::NormStats;
use surrogate_core::eval::{EvaluationReport, ProtocolResult};

use crate::staging;
use crate::svg::{self, Chart, Series, Style};
use crate::StoreResult;

pub const RESULTS: &str = "results.csv";
pub const TTEST: &str = "ttest.csv";
pub const CKA: &str = "cka.csv";
pub const SMOOTHING: &str = "smoothing.csv";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const SMOOTHING_SVG: &str = "smoothing.svg";

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rows are output scalars, their mean and the image; each selector has a
/// mean and a standard-deviation column, plus raw-space means when the
/// normalization ranges are known.
pub fn results_csv(report: &EvaluationReport, norm: Option<&NormStats>) -> String {
    let mut header = vec!["metric".to_string()];
    for s in &report.selectors {
        header.push(s.label.clone());
        header.push(format!("{}_std", s.label));
        if norm.is_some() {
            header.push(format!("{}_raw", s.label));
        }
    }
    let mut rows = vec![header];
    let d = report.selectors.iter().map(|s| s.per_scalar_mean.len()).max().unwrap_or(0);
    for k in 0..d {
        let mut row = vec![format!("o{}", k + 1)];
        for s in &report.selectors {
            let mean = s.per_scalar_mean.get(k).copied();
            row.push(opt(mean));
            row.push(opt(s.per_scalar_std.get(k).copied()));
            if let Some(n) = norm {
                row.push(opt(mean.map(|m| m * n.output_span(k) * n.output_span(k))));
            }
        }
        rows.push(row);
    }
    if d > 0 {
        let mut row = vec!["scalar_mean".to_string()];
        for s in &report.selectors {
            row.push(s.scalar_mean.to_string());
            row.push(s.scalar_std.to_string());
            if let Some(n) = norm {
                let raw: f64 = (0..d).map(|k| s.per_scalar_mean[k] * n.output_span(k) * n.output_span(k)).sum::<f64>() / d as f64;
                row.push(raw.to_string());
            }
        }
        rows.push(row);
    }
    if report.selectors.iter().any(|s| s.image_mean.is_some()) {
        let mut row = vec!["image".to_string()];
        for s in &report.selectors {
            row.push(opt(s.image_mean));
            row.push(opt(s.image_std));
            if norm.is_some() {
                row.push(String::new());
            }
        }
        rows.push(row);
    }
    let mut counts = vec!["n_evaluations".to_string()];
    let mut failures = vec!["failed_folds".to_string()];
    for s in &report.selectors {
        counts.extend([s.n_evaluations.to_string(), String::new()]);
        failures.extend([s.failed_folds.to_string(), String::new()]);
        if norm.is_some() {
            counts.push(String::new());
            failures.push(String::new());
        }
    }
    rows.push(counts);
    rows.push(failures);
    csv_string(&rows)
}

pub fn ttest_csv(report: &EvaluationReport) -> String {
    let mut rows = vec!["modality,a,b,n_pairs,mean_a,mean_b,t,df,p_one_tailed"
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>()];
    for r in &report.ttests {
        rows.push(vec![
            r.modality.name().to_string(),
            r.a.clone(),
            r.b.clone(),
            r.n_pairs.to_string(),
            r.mean_a.to_string(),
            r.mean_b.to_string(),
            opt(r.test.map(|t| t.t)),
            r.test.map(|t| t.df.to_string()).unwrap_or_default(),
            opt(r.test.map(|t| t.p_one_tailed)),
        ]);
    }
    csv_string(&rows)
}

pub fn cka_csv(report: &EvaluationReport) -> String {
    let d = report.cka.first().map_or(0, |r| r.per_scalar.len());
    let mut header = vec!["selector".to_string()];
    header.extend((1..=d).map(|k| format!("o{k}")));
    header.push("mean".into());
    let mut rows = vec![header];
    for r in &report.cka {
        let mut row = vec![r.label.clone()];
        row.extend(r.per_scalar.iter().map(|v| v.to_string()));
        row.push((r.per_scalar.iter().sum::<f64>() / r.per_scalar.len().max(1) as f64).to_string());
        rows.push(row);
    }
    csv_string(&rows)
}

pub fn smoothing_csv(report: &EvaluationReport) -> String {
    let mut rows = vec![vec!["modality".to_string(), "k".into(), "mean_min_smoothed".into()]];
    for (m, k, v) in &report.smoothing_curve {
        rows.push(vec![m.name().to_string(), k.to_string(), v.to_string()]);
    }
    csv_string(&rows)
}

fn labels_in_order(report: &EvaluationReport) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for p in &report.scatter {
        if !labels.contains(&p.label) {
            labels.push(p.label.clone());
        }
    }
    labels
}

pub fn scatter_svg(report: &EvaluationReport) -> String {
    let mut series = Vec::new();
    for m in [Modality::Scalars, Modality::Image] {
        for label in labels_in_order(report) {
            let points: Vec<(f64, f64)> = report
                .scatter
                .iter()
                .filter(|p| p.modality == m && p.label == label)
                .map(|p| (p.validation, p.test))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    name: format!("{label} ({})", m.name()),
                    points,
                });
            }
        }
    }
    let chart = Chart {
        title: "Validation vs test error of selected configurations",
        x_label: "nested validation error V",
        y_label: "test error",
        log_axes: true,
        diagonal: true,
    };
    svg::render(&chart, &series, Style::Markers)
}

pub fn smoothing_svg(report: &EvaluationReport) -> String {
    let mut series = Vec::new();
    for m in [Modality::Scalars, Modality::Image] {
        let points: Vec<(f64, f64)> = report
            .smoothing_curve
            .iter()
            .filter(|(mm, _, _)| *mm == m)
            .map(|&(_, k, v)| (k as f64, v))
            .collect();
        if !points.is_empty() {
            series.push(Series {
                name: m.name().to_string(),
                points,
            });
        }
    }
    let chart = Chart {
        title: "Mean minimum smoothed validation error",
        x_label: "neighborhood size k",
        y_label: "mean min smoothed V",
        log_axes: false,
        diagonal: false,
    };
    svg::render(&chart, &series, Style::Lines)
}

/// Writes every report file into `dir` and returns the aggregated report.
pub fn write_report(dir: &Path, protocol: &ProtocolResult, norm: Option<&NormStats>) -> StoreResult<EvaluationReport> {
    let report = EvaluationReport::from_protocol(protocol)?;
    staging::write(&dir.join(RESULTS), results_csv(&report, norm))?;
    staging::write(&dir.join(TTEST), ttest_csv(&report))?;
    staging::write(&dir.join(CKA), cka_csv(&report))?;
    staging::write(&dir.join(SMOOTHING), smoothing_csv(&report))?;
    staging::write(&dir.join(SCATTER_SVG), scatter_svg(&report))?;
    staging::write(&dir.join(SMOOTHING_SVG), smoothing_svg(&report))?;
    Ok(report)
}
