//! Minimal line-plot SVG writer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
pub const DIVISIONS: usize = 5;

const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 70.0;

/// Maps `[lo, hi]` onto `[a, b]`; a collapsed range lands on the midpoint.
fn axis(lo: f64, hi: f64, a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |v| {
        if hi > lo {
            a + (v - lo) / (hi - lo) * (b - a)
        } else {
            0.5 * (a + b)
        }
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `points` as a single polyline with labelled axes.
pub fn curve_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> Result<String> {
    if points.len() < 2 {
        bail!("a curve needs at least 2 points, got {}", points.len());
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        bail!("curve contains a non-finite point");
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (px0, px1, py0, py1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let sx = axis(x0, x1, px0, px1);
    let sy = axis(y0, y1, py0, py1);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{px0},{py1} L{px0},{py0} L{px1},{py0}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=DIVISIONS {
        let t = i as f64 / DIVISIONS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (xp, yp) = (px0 + t * (px1 - px0), py0 + t * (py1 - py0));
        let _ = writeln!(
            s,
            r#"<line class="xtick" x1="{xp:.2}" y1="{py0}" x2="{xp:.2}" y2="{:.2}" stroke="black"/><text x="{xp:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            py0 + 6.0,
            py0 + 22.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line class="ytick" x1="{:.2}" y1="{yp:.2}" x2="{px0}" y2="{yp:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#,
            px0 - 6.0,
            px0 - 10.0,
            yp + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
        0.5 * (px0 + px1),
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        0.5 * (py0 + py1),
        0.5 * (py0 + py1),
        escape(y_label)
    );
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        coords.join(" ")
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_curve_svg(points: &[(f64, f64)], x_label: &str, y_label: &str, path: &Path) -> Result<()> {
    let svg = curve_svg(points, x_label, y_label)?;
    fs::write(path, svg).with_context(|| format!("cannot write {}", path.display()))
}
