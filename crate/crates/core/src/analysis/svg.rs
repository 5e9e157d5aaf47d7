//! Minimal deterministic SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Colour index into the palette.
    pub series: usize,
    pub label: Option<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(
    out: &mut String,
    x_label: &str,
    y_label: &str,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
) {
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = left + f * (right - left);
        let y = bottom - f * (bottom - top);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 16.0,
            tick(x0 + f * (x1 - x0))
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 4.0,
            tick(y0 + f * (y1 - y0))
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Scatter plot; `note` is printed in the top-left corner of the plot area.
pub fn scatter(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[Point],
    note: Option<&str>,
) -> String {
    let xr = range(points.iter().map(|p| p.x));
    let yr = range(points.iter().map(|p| p.y));
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let sx = |x: f64| left + (x - xr.0) / (xr.1 - xr.0) * (right - left);
    let sy = |y: f64| bottom - (y - yr.0) / (yr.1 - yr.0) * (bottom - top);

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label, xr, yr);
    if yr.0 < 0.0 && yr.1 > 0.0 {
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#bbbbbb" stroke-dasharray="4 3"/>"##,
            y = sy(0.0)
        );
    }
    for p in points {
        let (x, y) = (sx(p.x), sy(p.y));
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}" fill-opacity="0.8"/>"#,
            PALETTE[p.series % PALETTE.len()]
        );
        if let Some(label) = &p.label {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                x + 6.0,
                y - 6.0,
                escape(label)
            );
        }
    }
    if let Some(note) = note {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            left + 10.0,
            top + 14.0,
            escape(note)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One coloured cell per value, blue for negative and red for positive.
pub fn heat_strip(title: &str, cells: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let max = cells.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
    let n = cells.len().max(1) as f64;
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let w = (right - left) / n;
    let (top, h) = (MARGIN_TOP + 60.0, 120.0);
    for (i, (label, v)) in cells.iter().enumerate() {
        let intensity = if max > 0.0 {
            (v.abs() / max).min(1.0)
        } else {
            0.0
        };
        let fade = (255.0 * (1.0 - intensity)).round() as u8;
        let color = if *v >= 0.0 {
            format!("#ff{fade:02x}{fade:02x}")
        } else {
            format!("#{fade:02x}{fade:02x}ff")
        };
        let x = left + i as f64 * w;
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{top}" width="{w:.2}" height="{h}" fill="{color}" stroke="#666666" stroke-width="0.5"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            x + w / 2.0,
            top + h + 14.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">max |NIE| = {}</text>"#,
        WIDTH / 2.0,
        top + h + 40.0,
        tick(max)
    );
    out.push_str("</svg>\n");
    out
}
