use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{save_csv, ExperimentRecord};
use super::ExperimentKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

/// Mean, median and standard error over seeds of one metric at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub kind: ExperimentKind,
    pub metric: String,
    pub k: usize,
    pub r: usize,
    pub n: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub stderr: f64,
}

/// Groups finite, non-error records by `(kind, metric, k, r, n)`.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(ExperimentKind, &str, usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for rec in records.iter().filter(|r| !r.is_error() && r.value.is_finite()) {
        groups.entry((rec.kind, rec.metric.as_str(), rec.k, rec.r, rec.n)).or_default().push(rec.value);
    }
    groups
        .into_iter()
        .map(|((kind, metric, k, r, n), mut values)| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let stderr = if count > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64 / count as f64).sqrt()
            } else {
                0.0
            };
            values.sort_by(f64::total_cmp);
            let median = if count % 2 == 1 { values[count / 2] } else { 0.5 * (values[count / 2 - 1] + values[count / 2]) };
            AggregateRow { kind, metric: metric.to_owned(), k, r, n, count, mean, median, stderr }
        })
        .collect()
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; NaN when either
/// input is constant or shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs differ in length");
    if x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mean = (x.len() + 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    sxy / (sxx * syy).sqrt()
}

/// Writes `records.csv` and `summary.csv` (CSV) or one line chart per
/// `(kind, metric)` (SVG) into `dir`; returns the files written.
pub fn emit_report(records: &[ExperimentRecord], format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Csv => {
            let raw = dir.join("records.csv");
            save_csv(records, &raw)?;
            let summary = dir.join("summary.csv");
            let mut w = csv::Writer::from_path(&summary)?;
            for row in aggregate(records) {
                w.serialize(row)?;
            }
            w.flush()?;
            Ok(vec![raw, summary])
        }
        ReportFormat::Svg => {
            if records.is_empty() {
                return Err(Error::EmptyRecords);
            }
            let rows = aggregate(records);
            let mut charts: BTreeMap<(ExperimentKind, &str), Vec<&AggregateRow>> = BTreeMap::new();
            for row in &rows {
                charts.entry((row.kind, row.metric.as_str())).or_default().push(row);
            }
            let mut written = Vec::new();
            for ((kind, metric), rows) in charts {
                let path = dir.join(format!("{}_{}.svg", kind.name(), sanitize(metric)));
                fs::write(&path, line_chart(&format!("{} / {metric}", kind.name()), &rows))?;
                written.push(path);
            }
            Ok(written)
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }).collect()
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Mean ± stderr against `n`, one polyline per `(k, r)`.
fn line_chart(title: &str, rows: &[&AggregateRow]) -> String {
    let mut series: BTreeMap<(usize, usize), Vec<&AggregateRow>> = BTreeMap::new();
    for row in rows {
        series.entry((row.k, row.r)).or_default().push(row);
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in rows {
        x0 = x0.min(row.n as f64);
        x1 = x1.max(row.n as f64);
        y0 = y0.min(row.mean - row.stderr);
        y1 = y1.max(row.mean + row.stderr);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (label, x, y, anchor) in [
        (format!("{x0}"), sx(x0), HEIGHT - MARGIN + 16.0, "middle"),
        (format!("{x1}"), sx(x1), HEIGHT - MARGIN + 16.0, "middle"),
        (format!("{y0:.3}"), MARGIN - 6.0, sy(y0), "end"),
        (format!("{y1:.3}"), MARGIN - 6.0, sy(y1) + 4.0, "end"),
        ("n".to_owned(), WIDTH / 2.0, HEIGHT - 20.0, "middle"),
    ] {
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{label}</text>"#);
    }
    for (i, ((k, r), points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.n as f64), sy(p.mean))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for p in points {
            let x = sx(p.n as f64);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sy(p.mean - p.stderr),
                sy(p.mean + p.stderr),
                sy(p.mean)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">k={k} r={r}</text>"#,
            WIDTH - MARGIN + 4.0 - 80.0,
            MARGIN + 16.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
