//! Minimal, deterministic SVG charts: a per-metric bar chart, a spectral
//! profile overlay and an F1-over-dates line chart.
//!
//! Coordinates are printed with two decimals so identical inputs always give
//! byte-identical files.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::metrics::MetricsReport;
use crate::physics::SpectralProfile;
use crate::predict::DatePoint;
use crate::raster::Band;
use crate::{Error, Result};

pub const METRICS_CHART: &str = "metrics_bar.svg";
pub const PROFILE_CHART: &str = "spectral_profile.svg";
pub const TIMESERIES_CHART: &str = "f1_timeseries.svg";

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}">{}</text>"#,
            escape(s)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, dashed: bool) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        );
        for (x, y) in points {
            let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{stroke}"/>"#);
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Plot area inside the margins, mapping data ranges to pixels.
struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let (a, b) = self.x_range;
        self.left + if b > a { (v - a) / (b - a) * self.width } else { 0.5 * self.width }
    }

    fn y(&self, v: f64) -> f64 {
        let (a, b) = self.y_range;
        self.top + self.height - if b > a { (v - a) / (b - a) * self.height } else { 0.5 * self.height }
    }

    fn axes(&self, svg: &mut Svg, y_ticks: usize) {
        let bottom = self.top + self.height;
        svg.line(self.left, bottom, self.left + self.width, bottom, "black");
        svg.line(self.left, self.top, self.left, bottom, "black");
        for i in 0..=y_ticks {
            let v = self.y_range.0 + (self.y_range.1 - self.y_range.0) * i as f64 / y_ticks as f64;
            let y = self.y(v);
            svg.line(self.left - 4.0, y, self.left, y, "black");
            svg.text(self.left - 6.0, y + 4.0, "end", 10, &format!("{v:.3}"));
        }
    }
}

fn legend(svg: &mut Svg, x: f64, y: f64, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        svg.rect(x, yy - 9.0, 12.0, 10.0, color);
        svg.text(x + 18.0, yy, "start", 11, label);
    }
}

/// One small panel per metric, one bar per labelled report. Each panel has its
/// own scale because the metrics live on very different ranges.
pub fn metrics_bar_chart(reports: &[(String, MetricsReport)]) -> String {
    const COLS: usize = 4;
    let (pw, ph) = (200.0, 170.0);
    let mut svg = Svg::new(COLS as f64 * pw + 20.0, 2.0 * ph + 40.0 + 16.0 * reports.len() as f64);
    let names = MetricsReport::named_values(&reports.first().map(|r| r.1).unwrap_or(EMPTY_REPORT));
    for (m, (metric, _)) in names.iter().enumerate() {
        let (col, row) = (m % COLS, m / COLS);
        let (x0, y0) = (10.0 + col as f64 * pw, 10.0 + row as f64 * ph);
        let values: Vec<f64> = reports.iter().map(|(_, r)| r.named_values()[m].1).collect();
        let hi = values.iter().copied().fold(0.0, f64::max);
        let lo = values.iter().copied().fold(0.0, f64::min);
        let frame = Frame {
            left: x0 + 50.0,
            top: y0 + 22.0,
            width: pw - 65.0,
            height: ph - 50.0,
            x_range: (0.0, 1.0),
            y_range: (lo, if hi > lo { hi } else { lo + 1.0 }),
        };
        svg.text(x0 + pw / 2.0, y0 + 14.0, "middle", 12, metric);
        frame.axes(&mut svg, 2);
        let slot = frame.width / values.len().max(1) as f64;
        for (i, v) in values.iter().enumerate() {
            let (top, base) = (frame.y(v.max(0.0)), frame.y(v.min(0.0)));
            svg.rect(frame.left + slot * (i as f64 + 0.15), top, slot * 0.7, base - top, PALETTE[i % PALETTE.len()]);
        }
    }
    let entries: Vec<(&str, &str)> =
        reports.iter().enumerate().map(|(i, (label, _))| (label.as_str(), PALETTE[i % PALETTE.len()])).collect();
    legend(&mut svg, 20.0, 2.0 * ph + 30.0, &entries);
    svg.finish()
}

const EMPTY_REPORT: MetricsReport = MetricsReport {
    fid_mean: 0.0,
    fid_bands_123: 0.0,
    fid_bands_345: 0.0,
    chi_square: 0.0,
    intersection: 0.0,
    bhattacharyya: 0.0,
    sid: 0.0,
    profile_r2: 0.0,
    sample_counts: crate::metrics::SampleCounts { real: 0, synthetic: 0 },
};

/// Mean reflectance per band, real (solid) against synthetic (dashed).
pub fn spectral_profile_chart(real: &SpectralProfile, synth: &SpectralProfile) -> String {
    let mut svg = Svg::new(520.0, 340.0);
    let hi = real.mean.iter().chain(&synth.mean).copied().fold(0.0, f64::max);
    let frame = Frame {
        left: 60.0,
        top: 30.0,
        width: 400.0,
        height: 250.0,
        x_range: (0.0, 4.0),
        y_range: (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 }),
    };
    svg.text(260.0, 20.0, "middle", 13, "Mean spectral profile");
    frame.axes(&mut svg, 5);
    for band in Band::ALL {
        let x = frame.x(band.index() as f64);
        svg.text(x, frame.top + frame.height + 16.0, "middle", 11, band.short_name());
    }
    for (profile, color, dashed) in [(real, PALETTE[0], false), (synth, PALETTE[1], true)] {
        let pts: Vec<(f64, f64)> = profile.mean.iter().enumerate().map(|(b, v)| (frame.x(b as f64), frame.y(*v))).collect();
        svg.polyline(&pts, color, dashed);
    }
    legend(&mut svg, 380.0, 300.0, &[("real", PALETTE[0]), ("synthetic", PALETTE[1])]);
    svg.finish()
}

/// Unhealthy-class F1 per date for real-only and mixed training.
pub fn f1_timeseries_chart(points: &[DatePoint]) -> String {
    let mut svg = Svg::new(520.0, 340.0);
    let last = points.iter().map(|p| p.date_index).max().unwrap_or(0) as f64;
    let frame = Frame {
        left: 60.0,
        top: 30.0,
        width: 400.0,
        height: 250.0,
        x_range: (points.iter().map(|p| p.date_index).min().unwrap_or(0) as f64, last),
        y_range: (0.0, 1.0),
    };
    svg.text(260.0, 20.0, "middle", 13, "Unhealthy F1 by date");
    frame.axes(&mut svg, 5);
    for p in points {
        svg.text(frame.x(p.date_index as f64), frame.top + frame.height + 16.0, "middle", 11, &p.date_index.to_string());
    }
    if !points.is_empty() {
        let real: Vec<(f64, f64)> = points.iter().map(|p| (frame.x(p.date_index as f64), frame.y(p.f1_real))).collect();
        let mixed: Vec<(f64, f64)> = points.iter().map(|p| (frame.x(p.date_index as f64), frame.y(p.f1_mixed))).collect();
        svg.polyline(&real, PALETTE[0], false);
        svg.polyline(&mixed, PALETTE[2], true);
    }
    legend(&mut svg, 380.0, 300.0, &[("real only", PALETTE[0]), ("real + synthetic", PALETTE[2])]);
    svg.finish()
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// What [`emit_plots`] draws; each part is optional.
#[derive(Debug, Default)]
pub struct PlotInputs<'a> {
    pub reports: &'a [(String, MetricsReport)],
    pub profiles: Option<(&'a SpectralProfile, &'a SpectralProfile)>,
    pub timeseries: Option<&'a [DatePoint]>,
}

/// Write the charts whose inputs are present; returns the written paths.
pub fn emit_plots(inputs: &PlotInputs<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if !inputs.reports.is_empty() {
        written.push(write(out_dir, METRICS_CHART, &metrics_bar_chart(inputs.reports))?);
    }
    if let Some((real, synth)) = inputs.profiles {
        written.push(write(out_dir, PROFILE_CHART, &spectral_profile_chart(real, synth))?);
    }
    if let Some(points) = inputs.timeseries {
        written.push(write(out_dir, TIMESERIES_CHART, &f1_timeseries_chart(points))?);
    }
    Ok(written)
}
