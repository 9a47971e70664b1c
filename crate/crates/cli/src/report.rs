//! Evaluation report file, PR-curve rendering and atomic output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ddfuse_core::metrics::{precision_envelope, EvalReport, Interpolation, PrPoint};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub iou_threshold: f64,
    pub interp: Interpolation,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    pub counts: Counts,
    pub pr_points: Vec<PrPointRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrPointRecord {
    pub recall: f64,
    pub precision: f64,
}

impl From<&EvalReport> for ReportFile {
    fn from(r: &EvalReport) -> Self {
        Self {
            iou_threshold: r.iou_threshold,
            interp: r.interpolation,
            precision: r.precision(),
            recall: r.recall(),
            ap: r.ap,
            counts: Counts {
                tp: r.true_positives,
                fp: r.false_positives,
                fn_: r.false_negatives,
            },
            pr_points: r
                .pr_points
                .iter()
                .map(|p| PrPointRecord {
                    recall: p.recall,
                    precision: p.precision,
                })
                .collect(),
        }
    }
}

impl ReportFile {
    pub fn to_report(&self) -> EvalReport {
        EvalReport {
            true_positives: self.counts.tp,
            false_positives: self.counts.fp,
            false_negatives: self.counts.fn_,
            pr_points: self
                .pr_points
                .iter()
                .map(|p| PrPoint {
                    recall: p.recall,
                    precision: p.precision,
                })
                .collect(),
            ap: self.ap,
            iou_threshold: self.iou_threshold,
            interpolation: self.interp,
        }
    }
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn plot_xy(recall: f64, precision: f64) -> (f64, f64) {
    let span = SIZE - 2.0 * MARGIN;
    (MARGIN + recall * span, SIZE - MARGIN - precision * span)
}

/// Raw PR points as a polyline and the interpolated envelope as a step line.
pub fn pr_curve_svg(report: &EvalReport) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0) = plot_xy(0.0, 0.0);
    let (x1, y1) = plot_xy(1.0, 1.0);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for t in 0..=10 {
        let v = f64::from(t) / 10.0;
        let (x, _) = plot_xy(v, 0.0);
        let (_, y) = plot_xy(0.0, v);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            y0 + 15.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{y:.2}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            x0 - 5.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">recall</text>"#,
        SIZE / 2.0,
        SIZE - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.2})">precision</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="30" font-size="14" text-anchor="middle">AP@{} = {:.4}</text>"#,
        SIZE / 2.0,
        report.iou_threshold,
        report.ap
    );

    if !report.pr_points.is_empty() {
        let mut raw = String::new();
        let (sx, sy) = plot_xy(0.0, 1.0);
        let _ = write!(raw, "{sx:.2},{sy:.2}");
        for p in &report.pr_points {
            let (x, y) = plot_xy(p.recall, p.precision);
            let _ = write!(raw, " {x:.2},{y:.2}");
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{raw}" fill="none" stroke="#999999" stroke-width="1"/>"##
        );

        let envelope = precision_envelope(&report.pr_points);
        let mut step = String::new();
        let mut recall = 0.0;
        for (p, &env) in report.pr_points.iter().zip(&envelope) {
            let (xa, y) = plot_xy(recall, env);
            let (xb, _) = plot_xy(p.recall, env);
            let _ = write!(step, "{xa:.2},{y:.2} {xb:.2},{y:.2} ");
            recall = p.recall;
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            step.trim_end()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    write_all_atomic(&[(path, contents)])
}

/// Stages every file before renaming any of them, so a failure while
/// writing leaves none of the outputs behind.
pub fn write_all_atomic(files: &[(&Path, &[u8])]) -> Result<(), CliError> {
    let mut staged = Vec::with_capacity(files.len());
    for &(path, contents) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
        tmp.write_all(contents).map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    }
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, to_json(value).as_bytes())
}
