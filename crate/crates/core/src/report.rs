//! Report artifacts: combined summary JSON, per-fold CSV and SVG plots.
//!
//! Plots are rendered from [`RunSummary`] values only, so every number in
//! their text is a formatted summary field.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelKind;
use crate::transfer::{histogram_bin, FoldRow, RunSummary, HISTOGRAM_BINS};

pub const SUMMARY_JSON: &str = "summary.json";
pub const FOLDS_CSV: &str = "folds.csv";
pub const DISTRIBUTION_SVG: &str = "distribution.svg";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report: {0}")]
    Protocol(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, ReportError>;

/// Summaries of every reported model, in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub models: Vec<RunSummary>,
}

/// Row of the combined per-fold CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: ModelKind,
    pub subject_id: String,
    pub n_test: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

impl ReportRow {
    fn new(model: ModelKind, r: &FoldRow) -> Self {
        Self {
            model,
            subject_id: r.subject_id.clone(),
            n_test: r.n_test,
            n_correct: r.n_correct,
            accuracy: r.accuracy,
            epochs_run: r.epochs_run,
            stopped_early: r.stopped_early,
        }
    }
}

/// Rendered artifacts, keyed by file name.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub files: Vec<(String, Vec<u8>)>,
}

impl ReportBundle {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path, e: std::io::Error| ReportError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

pub fn histogram_file(kind: ModelKind) -> String {
    format!("histogram_{}.svg", kind.name())
}

/// Percentage with at most two decimals and no trailing zeros.
pub fn percent(fraction: f64) -> String {
    let s = format!("{:.2}", fraction * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const W: f64 = 520.0;
const H: f64 = 320.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 44.0;

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
}

fn threshold_caption(s: &RunSummary) -> String {
    format!(
        "{} of {} ≥ {}%",
        s.count_ge_70,
        s.accuracies.len(),
        percent(s.threshold)
    )
}

/// Bar chart of fold accuracies in ten-point bins, left edge inclusive.
pub fn histogram_svg(s: &RunSummary) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}: median {}%, max {}%, {}</text>"#,
        W / 2.0,
        s.model,
        percent(s.median),
        percent(s.max),
        threshold_caption(s)
    );
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let base = TOP + plot_h;
    let peak = s.histogram.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = plot_w / HISTOGRAM_BINS as f64;
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        LEFT + plot_w
    );
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#
    );
    for (i, &count) in s.histogram.iter().enumerate() {
        let x = LEFT + i as f64 * bar_w;
        let h = plot_h * count as f64 / peak;
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0" stroke="white"/>"##,
            x,
            base - h,
            bar_w,
            h
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{count}</text>"#,
            x + bar_w / 2.0,
            base - h - 4.0
        );
    }
    for i in 0..=HISTOGRAM_BINS {
        let x = LEFT + i as f64 * bar_w;
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            base + 16.0,
            i * 10
        );
    }
    // the threshold bin starts exactly at the 70% tick
    let tx = LEFT + histogram_bin(s.threshold) as f64 * bar_w;
    let _ = writeln!(
        out,
        r#"<line x1="{tx:.2}" y1="{TOP}" x2="{tx:.2}" y2="{base}" stroke="red" stroke-dasharray="4 3"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">test accuracy (%)</text>"#,
        LEFT + plot_w / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">subjects</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// Box plot with individual folds per model and the efficiency threshold
/// marked across all of them.
pub fn distribution_svg(summaries: &[RunSummary]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let y = |acc: f64| TOP + plot_h * (1.0 - acc);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">test accuracy per model</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        TOP + plot_h
    );
    for tick in 0..=10 {
        let ty = y(tick as f64 / 10.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            ty + 4.0,
            tick * 10
        );
    }
    let slot = plot_w / summaries.len().max(1) as f64;
    for (m, s) in summaries.iter().enumerate() {
        let cx = LEFT + slot * (m as f64 + 0.5);
        let mut sorted = s.accuracies.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.is_empty() {
            continue;
        }
        let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let half = (slot * 0.2).min(40.0);
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(hi),
            y(lo)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#dde4f0" stroke="black"/>"##,
            cx - half,
            y(q3),
            2.0 * half,
            y(q1) - y(q3)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(s.median),
            cx + half,
            y(s.median)
        );
        for (i, &a) in sorted.iter().enumerate() {
            // fixed spread instead of random jitter keeps the output reproducible
            let dx = ((i * 7) % 11) as f64 - 5.0;
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#4c72b0" fill-opacity="0.6"/>"##,
                cx + half + 10.0 + dx,
                y(a)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - 24.0,
            s.model
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">median {}%</text>"#,
            H - 8.0,
            percent(s.median)
        );
    }
    if let Some(s) = summaries.first() {
        let ty = y(s.threshold);
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT}" y1="{ty:.2}" x2="{}" y2="{ty:.2}" stroke="red" stroke-dasharray="4 3"/>"#,
            LEFT + plot_w
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end" fill="red">{}%</text>"#,
            LEFT + plot_w,
            ty - 4.0,
            percent(s.threshold)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Builds every artifact. `folds` pairs each model with its per-fold rows.
pub fn emit_report(
    summaries: &[RunSummary],
    folds: &[(ModelKind, Vec<FoldRow>)],
) -> Result<ReportBundle> {
    if summaries.is_empty() {
        return Err(ReportError::Protocol("no model results to report".into()));
    }
    for s in summaries {
        if s.accuracies.is_empty() {
            return Err(ReportError::Protocol(format!(
                "{} has no completed folds",
                s.model
            )));
        }
        if s.accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(ReportError::Protocol(format!(
                "{} has an accuracy outside [0, 1]",
                s.model
            )));
        }
        if s.histogram.iter().sum::<usize>() != s.accuracies.len() {
            return Err(ReportError::Protocol(format!(
                "{} histogram does not cover its folds",
                s.model
            )));
        }
    }
    let summary = ReportSummary {
        models: summaries.to_vec(),
    };
    let mut files = vec![(
        SUMMARY_JSON.to_string(),
        serde_json::to_vec_pretty(&summary).expect("plain data serializes"),
    )];

    let csv_err = |e: csv::Error| ReportError::Protocol(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    for (model, rows) in folds {
        for row in rows {
            w.serialize(ReportRow::new(*model, row)).map_err(csv_err)?;
        }
    }
    files.push((
        FOLDS_CSV.to_string(),
        w.into_inner()
            .map_err(|e| ReportError::Protocol(e.to_string()))?,
    ));

    for s in summaries {
        files.push((histogram_file(s.model), histogram_svg(s).into_bytes()));
    }
    files.push((
        DISTRIBUTION_SVG.to_string(),
        distribution_svg(summaries).into_bytes(),
    ));
    Ok(ReportBundle { files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(acc: &[f64]) -> RunSummary {
        let s = crate::transfer::summarize(acc, crate::transfer::EFFICIENCY_THRESHOLD).unwrap();
        RunSummary {
            model: ModelKind::EegNet,
            config_hash: "0".into(),
            subjects: (0..acc.len()).map(|i| format!("S{i}")).collect(),
            accuracies: acc.to_vec(),
            median: s.median,
            max: s.max,
            threshold: s.threshold,
            count_ge_70: s.count_above_threshold,
            histogram: s.histogram,
            failed: Vec::new(),
        }
    }

    #[test]
    fn percent_trims_noise() {
        assert_eq!(percent(0.625), "62.5");
        assert_eq!(percent(0.975), "97.5");
        assert_eq!(percent(0.7), "70");
        assert_eq!(percent(71.0 / 120.0), "59.17");
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert!((quantile(&v, 0.25) - 0.2).abs() < 1e-12);
        assert_eq!(quantile(&[0.4], 0.75), 0.4);
    }

    #[test]
    fn single_fold_renders() {
        let b = emit_report(&[summary(&[0.5])], &[]).unwrap();
        let svg = String::from_utf8(b.file(DISTRIBUTION_SVG).unwrap().to_vec()).unwrap();
        assert!(svg.contains("median 50%"));
        assert!(emit_report(&[], &[]).is_err());
    }
}
