//! Dependency-free SVG plots. Output is a pure function of the input so the
//! files are byte-reproducible.

use std::fmt::Write as _;
use std::path::Path;

use brainmap::datasets::Layout;
use brainmap::selection::SelectionRow;
use brainmap::{Error, Result, UnitVector};
use serde::Deserialize;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

type Series = (&'static str, &'static str, fn(&CurvePoint) -> f64);

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn x_at(i: usize, count: usize) -> f64 {
    let span = WIDTH - 2.0 * MARGIN;
    if count <= 1 {
        MARGIN + span / 2.0
    } else {
        MARGIN + span * i as f64 / (count - 1) as f64
    }
}

fn y_at(v: f64, lo: f64, hi: f64) -> f64 {
    let span = HEIGHT - 2.0 * MARGIN;
    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    HEIGHT - MARGIN - span * t
}

/// The part of a selection row that the curve plot needs. Also what the
/// `report` command reads back from a result JSON.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub delta: f64,
    pub eta: f64,
    pub zeta: f64,
}

impl From<&SelectionRow> for CurvePoint {
    fn from(r: &SelectionRow) -> Self {
        CurvePoint {
            lambda: r.lambda,
            delta: r.delta,
            eta: r.eta,
            zeta: r.zeta,
        }
    }
}

/// delta, eta and zeta against the grid index, one polyline each. Lambdas
/// label the x ticks (the grid is not evenly spaced on any scale).
pub fn render_curves(rows: &[CurvePoint]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("selection table"));
    }
    let mut out = String::new();
    header(&mut out, "delta / eta / zeta vs lambda");
    let n = rows.len();
    for (i, r) in rows.iter().enumerate() {
        let x = x_at(i, n);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 15.0,
            r.lambda
        );
    }
    for (v, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{label}</text>"#,
            MARGIN - 5.0,
            y_at(v, 0.0, 1.0) + 3.0
        );
    }
    let series: [Series; 3] = [
        ("delta", "#1f77b4", |r| r.delta),
        ("eta", "#2ca02c", |r| r.eta),
        ("zeta", "#d62728", |r| r.zeta),
    ];
    for (k, (name, colour, get)) in series.iter().enumerate() {
        let points: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = get(r);
                let v = if v.is_finite() {
                    v.clamp(0.0, 1.0)
                } else {
                    0.0
                };
                format!("{:.2},{:.2}", x_at(i, n), y_at(v, 0.0, 1.0))
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="{name}" fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{colour}">{name}</text>"#,
            WIDTH - MARGIN + 5.0,
            MARGIN + 15.0 * (k + 1) as f64
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One weight time course per channel.
pub fn render_map(map: &UnitVector, layout: Layout) -> Result<String> {
    if layout.is_empty() {
        return Err(Error::EmptyInput("layout"));
    }
    if map.dim() != layout.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            actual: map.dim(),
        });
    }
    let w = map.as_slice();
    let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (lo, hi) = if peak > 0.0 {
        (-peak, peak)
    } else {
        (-1.0, 1.0)
    };
    let mut out = String::new();
    header(&mut out, "weight time courses per channel");
    let zero = y_at(0.0, lo, hi);
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
        WIDTH - MARGIN
    );
    for c in 0..layout.channels {
        let mut d = String::new();
        for t in 0..layout.timepoints {
            let cmd = if t == 0 { 'M' } else { 'L' };
            let _ = write!(
                d,
                "{}{cmd}{:.2},{:.2}",
                if t == 0 { "" } else { " " },
                x_at(t, layout.timepoints),
                y_at(w[layout.index(c, t)], lo, hi)
            );
        }
        // spread hues evenly around the wheel
        let hue = 360.0 * c as f64 / layout.channels as f64;
        let _ = writeln!(
            out,
            r#"<path class="channel" data-channel="{c}" fill="none" stroke="hsl({hue:.0},70%,40%)" stroke-width="1.5" d="{d}"/>"#
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_svg_curves(rows: &[CurvePoint], path: &Path) -> Result<()> {
    write(path, &render_curves(rows)?)
}

pub fn emit_svg_map(map: &UnitVector, layout: Layout, path: &Path) -> Result<()> {
    write(path, &render_map(map, layout)?)
}
