//! PEM against PDEM, one point per method.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{HarnessError, LeaderboardRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub label: String,
    pub pdem: f64,
    pub pem: f64,
}

pub fn scatter_points(rows: &[LeaderboardRow]) -> Result<Vec<ScatterPoint>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyInput("scatter needs at least one row"));
    }
    Ok(rows
        .iter()
        .map(|r| ScatterPoint {
            label: r.method.clone(),
            pdem: r.report.pdem,
            pem: r.report.pem,
        })
        .collect())
}

pub fn to_csv(points: &[ScatterPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "pdem", "pem"]).expect("in-memory write");
    for p in points {
        w.write_record([p.label.clone(), format!("{:.4}", p.pdem), format!("{:.4}", p.pem)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.1).max(0.01);
    ((lo - pad).max(0.0), hi + pad)
}

/// Static SVG with PDEM on x and PEM on y.
pub fn to_svg(points: &[ScatterPoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 60.0;
    let (x0, x1) = padded_range(points.iter().map(|p| p.pdem));
    let (y0, y1) = padded_range(points.iter().map(|p| p.pem));
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{M} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#,
        top = M,
        bottom = H - M,
        right = W - M
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text>"#, sx(fx), H - M + 18.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#, M - 6.0, sy(fy) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">PDEM</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(svg, r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">PEM</text>"#, H / 2.0, H / 2.0);
    for p in points {
        let (x, y) = (sx(p.pdem), sy(p.pem));
        let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 6.0, y - 6.0, escape(&p.label));
    }
    svg.push_str("</svg>\n");
    svg
}
