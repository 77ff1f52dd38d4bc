//! CSV, JSON Lines and SVG line-plot writers.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{AnalysisError, Series};

/// A header row plus string cells, written as RFC-4180 CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), AnalysisError> {
    if table.header.is_empty() {
        return Err(AnalysisError::EmptyExport);
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(&table.header)?;
    for row in &table.rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyExport);
    }
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// A line plot with one polyline per series (x = round index starting at 1)
/// and optional horizontal reference lines.
#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub reference_lines: Vec<(String, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let rounds = self.series.iter().map(Series::len).max().unwrap_or(0).max(1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let values = self
            .series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .chain(self.reference_lines.iter().map(|(_, v)| *v));
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = (hi - lo) * 0.05;
        lo -= pad;
        hi += pad;

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let x_of = |round: usize| {
            let span = (rounds.max(2) - 1) as f64;
            MARGIN_LEFT + (round.saturating_sub(1)) as f64 / span * plot_w
        };
        let y_of = |v: f64| MARGIN_TOP + (hi - v) / (hi - lo) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        // Axes.
        let x0 = MARGIN_LEFT;
        let y0 = MARGIN_TOP + plot_h;
        let _ = writeln!(
            svg,
            r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
            x0 + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<line class="axis" x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text class="x-label" x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            x0 + plot_w / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text class="y-label" x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for tick in 0..=4 {
            let v = lo + (hi - lo) * tick as f64 / 4.0;
            let y = y_of(v);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11">{:.2}</text>"#,
                x0 - 6.0,
                y + 4.0,
                v
            );
        }
        for tick in 0..=4 {
            let round = 1 + (rounds - 1) * tick / 4;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="11">{round}</text>"#,
                x_of(round),
                y0 + 16.0
            );
        }

        for (name, value) in &self.reference_lines {
            let y = y_of(*value);
            let _ = writeln!(
                svg,
                r##"<line class="reference" data-value="{value}" x1="{x0}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#555" stroke-dasharray="6 4"/>"##,
                x0 + plot_w
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.2}" font-size="11">{} = {}</text>"#,
                x0 + plot_w + 6.0,
                y + 4.0,
                escape(name),
                value
            );
        }

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut points = String::new();
            for (k, v) in series.values.iter().enumerate() {
                let _ = write!(points, "{:.2},{:.2} ", x_of(k + 1), y_of(*v));
            }
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                escape(&series.label),
                points.trim_end()
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
                x0 + plot_w + 6.0,
                MARGIN_TOP + 14.0 * i as f64,
                escape(&series.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

pub fn write_svg_lineplot(path: &Path, plot: &LinePlot) -> Result<(), AnalysisError> {
    if plot.series.iter().all(Series::is_empty) {
        return Err(AnalysisError::EmptyExport);
    }
    std::fs::write(path, plot.to_svg())?;
    Ok(())
}
