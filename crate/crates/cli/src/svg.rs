//! Minimal SVG charts. Every plotted series carries its exact values in a
//! `data-values` attribute (space separated, shortest round-trip form).

use std::fmt::Write;

use crate::table::num;

const W: f64 = 900.0;
const PANEL_H: f64 = 260.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const GAP: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Line {
    pub label: String,
    pub values: Vec<f64>,
}

pub struct Panel {
    pub title: String,
    pub lines: Vec<Line>,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn values_attr(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

/// Stacked line panels sharing one date axis.
pub fn line_chart(title: &str, dates: &[String], panels: &[Panel]) -> String {
    let h = TOP + panels.len() as f64 * (PANEL_H + GAP);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" viewBox="0 0 {W} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#, escape(title));
    let n = dates.len();
    let pw = W - LEFT - RIGHT;
    let x = |t: usize| LEFT + if n > 1 { pw * t as f64 / (n - 1) as f64 } else { 0.0 };
    for (k, p) in panels.iter().enumerate() {
        let y0 = TOP + k as f64 * (PANEL_H + GAP);
        let all = p.lines.iter().flat_map(|l| l.values.iter().copied()).filter(|v| v.is_finite());
        let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let y = |v: f64| y0 + PANEL_H - PANEL_H * (v - lo) / (hi - lo);
        let _ = writeln!(s, r#"<g class="panel" data-title="{}">"#, escape(&p.title));
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{y0}" width="{pw}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(s, r#"<text x="{LEFT}" y="{}">{}</text>"#, y0 - 6.0, escape(&p.title));
        for (v, anchor) in [(hi, y0 + 10.0), (lo, y0 + PANEL_H)] {
            let _ = writeln!(s, r#"<text x="{}" y="{anchor}" text-anchor="end">{:.4}</text>"#, LEFT - 4.0, v);
        }
        if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
            let yb = y0 + PANEL_H + 14.0;
            let _ = writeln!(s, r#"<text x="{LEFT}" y="{yb}">{}</text>"#, escape(first));
            let _ = writeln!(s, r#"<text x="{}" y="{yb}" text-anchor="end">{}</text>"#, W - RIGHT, escape(last));
        }
        for (j, l) in p.lines.iter().enumerate() {
            let pts: Vec<String> = l
                .values
                .iter()
                .enumerate()
                .map(|(t, &v)| format!("{:.2},{:.2}", x(t), y(if v.is_finite() { v } else { lo })))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" data-label="{}" data-values="{}" points="{}"/>"#,
                PALETTE[j % PALETTE.len()],
                escape(&l.label),
                values_attr(&l.values),
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
                LEFT + 8.0 + 110.0 * j as f64,
                y0 + 14.0,
                PALETTE[j % PALETTE.len()],
                escape(&l.label)
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Correlation heatmap; blue for negative, red for positive.
pub fn heatmap(title: &str, names: &[String], m: &nalgebra::DMatrix<f64>) -> String {
    let n = names.len();
    let cell = (560.0 / n.max(1) as f64).clamp(12.0, 48.0);
    let left = 110.0;
    let top = 50.0;
    let size = left + cell * n as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{}" viewBox="0 0 {size} {}" font-family="sans-serif" font-size="10">"#,
        size + 60.0,
        size + 60.0
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, name) in names.iter().enumerate() {
        let c = top + cell * (i as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{}" y="{c}" text-anchor="end">{}</text>"#, left - 4.0, escape(name));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" transform="rotate(-60 {} {})">{}</text>"#,
            left + cell * (i as f64 + 0.5),
            top + cell * n as f64 + 12.0,
            left + cell * (i as f64 + 0.5),
            top + cell * n as f64 + 12.0,
            escape(name)
        );
    }
    for a in 0..n {
        for b in 0..n {
            let v = m[(a, b)];
            let w = v.abs().min(1.0);
            let (r, g, bl) = if v >= 0.0 {
                (255.0, 255.0 * (1.0 - w), 255.0 * (1.0 - w))
            } else {
                (255.0 * (1.0 - w), 255.0 * (1.0 - w), 255.0)
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({:.0},{:.0},{:.0})" data-row="{}" data-col="{}" data-value="{}"/>"#,
                left + cell * b as f64,
                top + cell * a as f64,
                r,
                g,
                bl,
                escape(&names[a]),
                escape(&names[b]),
                num(v)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
