use std::fmt::Write as _;
use std::path::Path;

use super::SegmentImportance;
use crate::error::{Error, Result};
use crate::util::csv_field;

pub const ATTRIBUTION_HEADER: &str = "recording,chunk_start_s,chunk_end_s,words,raw_score,norm_score,selected";

pub fn write_attribution_csv(path: &Path, rows: &[SegmentImportance]) -> Result<()> {
    let mut s = String::from(ATTRIBUTION_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{},{:.9e},{:.9},{}",
            csv_field(&r.recording),
            r.start_s,
            r.end_s,
            csv_field(&r.words.join(" ")),
            r.raw_score,
            r.score,
            r.selected
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Diverging palette: -1 blue, 0 white, +1 red.
fn diverging(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |x: f64| (255.0 * (1.0 - x)).round() as u8;
    let (r, g, b) = if v >= 0.0 {
        (255, fade(v), fade(v))
    } else {
        (fade(-v), fade(-v), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const WIDTH: f64 = 900.0;
const MARGIN: f64 = 40.0;

/// One recording's chunks as coloured bands on a time axis, with word labels;
/// selected chunks are outlined.
pub fn recording_heatmap_svg(title: &str, rows: &[SegmentImportance], duration_s: f64) -> String {
    let height = 150.0;
    let span = duration_s.max(rows.iter().map(|r| r.end_s).fold(0.0, f64::max)).max(1e-9);
    let x = |t: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * t / span;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="16" font-size="12">{}</text>"#, escape(title));
    for r in rows {
        let (x0, x1) = (x(r.start_s), x(r.end_s));
        let stroke = if r.selected { r#" stroke="black" stroke-width="2""# } else { "" };
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="30" width="{:.2}" height="60" fill="{}"{stroke}><title>{} {:.3}</title></rect>"#,
            (x1 - x0).max(0.5),
            diverging(r.score),
            escape(&r.words.join(" ")),
            r.score
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="104" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(&r.words.join(" "))
        );
    }
    let y = 118.0;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let ticks = 5;
    for i in 0..=ticks {
        let t = span * i as f64 / ticks as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{y}" x2="{0:.2}" y2="{1}" stroke="black"/><text x="{0:.2}" y="{2}" text-anchor="middle">{t:.2} s</text>"#,
            x(t),
            y + 4.0,
            y + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Side-by-side class-averaged maps (HC left, PD right), each timestep a
/// coloured column scaled by the larger of the two maps' peak magnitudes.
pub fn class_pair_svg(hc: &[f64], pd: &[f64]) -> String {
    let scale = hc.iter().chain(pd).map(|v| v.abs()).fold(0.0, f64::max);
    let panel = (WIDTH - 3.0 * MARGIN) / 2.0;
    let height = 140.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    for (i, (name, map)) in [("HC", hc), ("PD", pd)].into_iter().enumerate() {
        let left = MARGIN + i as f64 * (panel + MARGIN);
        let _ = writeln!(s, r#"<text x="{left}" y="18">{name} (class average)</text>"#);
        let w = panel / map.len().max(1) as f64;
        for (t, v) in map.iter().enumerate() {
            let c = if scale > 0.0 { v / scale } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<rect x="{:.3}" y="30" width="{:.3}" height="80" fill="{}"/>"#,
                left + t as f64 * w,
                w + 0.05,
                diverging(c)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="30" width="{panel:.3}" height="80" fill="none" stroke="black"/><text x="{left}" y="128">t = 0</text><text x="{:.3}" y="128" text-anchor="end">t = {}</text>"#,
            left + panel,
            map.len().saturating_sub(1)
        );
    }
    s.push_str("</svg>\n");
    s
}
