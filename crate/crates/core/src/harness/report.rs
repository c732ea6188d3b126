//! CSV and SVG writers. Numbers use Rust's shortest round-trip formatting,
//! so output is byte-stable for identical inputs.

use std::fmt::Write as _;
use std::path::Path;

use super::{CompressionRow, ExperimentResult, LossRecord, PoseRow};
use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 16] = [
    "fingerprint",
    "ccr",
    "scr",
    "ap3d_0_100",
    "ap3d_0_30",
    "ap3d_30_50",
    "ap3d_50_100",
    "apbev_0_100",
    "apbev_0_30",
    "apbev_30_50",
    "apbev_50_100",
    "average_byte",
    "payload_bytes",
    "arrival_delay_s",
    "detections",
    "ground_truth",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Usage(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Usage(format!("csv: {e}"))
}

/// Absent AP (no ground truth in the bucket) is an empty field.
pub fn results_csv(results: &[ExperimentResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in results {
        let mut rec = vec![r.fingerprint.clone(), r.ccr.to_string(), r.scr.to_string()];
        rec.extend(r.ap_3d.iter().map(|b| opt(b.ap)));
        rec.extend(r.ap_bev.iter().map(|b| opt(b.ap)));
        rec.extend([
            r.average_byte.to_string(),
            r.payload_bytes.to_string(),
            r.arrival_delay.to_string(),
            r.detections.to_string(),
            r.ground_truth.to_string(),
        ]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub fn compression_csv(rows: &[CompressionRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ccr", "scr", "total_rate", "ap3d_0_100", "apbev_0_100", "average_byte", "payload_bytes", "weights"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.ccr.to_string(),
            r.scr.to_string(),
            r.total_rate.to_string(),
            opt(r.ap_3d),
            opt(r.ap_bev),
            r.average_byte.to_string(),
            r.payload_bytes.to_string(),
            r.weights.label().to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn pose_csv(rows: &[PoseRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rot_noise_deg", "seeds", "mean_ap3d", "std_ap3d", "mean_apbev"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.rot_noise_deg.to_string(),
            r.seeds.to_string(),
            r.mean_ap_3d.to_string(),
            r.std_ap_3d.to_string(),
            r.mean_ap_bev.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn loss_trace_csv(trace: &[LossRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "total", "bbox", "cls", "dir", "grad_norm"])
        .map_err(csv_err)?;
    for r in trace {
        w.write_record([
            r.step.to_string(),
            r.total.to_string(),
            r.bbox.to_string(),
            r.cls.to_string(),
            r.dir.to_string(),
            r.grad_norm.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal line chart; non-finite points are dropped.
pub fn svg_line_plot(title: &str, x_label: &str, y_label: &str, series: &[PlotSeries]) -> String {
    let (title, x_label, y_label) = (escape(title), escape(x_label), escape(y_label));
    let (w, h, m) = (640.0, 400.0, 60.0);
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (mut y0, mut y1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#, h / 2.0, h / 2.0);
    for (v, anchor, x, y) in [(x0, "middle", sx(x0), h - m + 16.0), (x1, "middle", sx(x1), h - m + 16.0)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, m - 5.0, sy(v) + 4.0);
    }
    for (i, se) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = se
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{c}">{}</text>"#, w - m - 120.0, m + 16.0 * i as f64, escape(&se.name));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}
