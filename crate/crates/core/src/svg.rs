//! Minimal SVG output: class-colored scatter plots and line charts.

use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Frame {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (px, py) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            let w = (hi - lo).max(1e-9);
            (lo - 0.05 * w, hi + 0.05 * w)
        };
        Frame { x: pad(x), y: pad(y) }
    }

    fn map(&self, px: f64, py: f64) -> (f64, f64) {
        let sx = MARGIN + (px - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN);
        let sy = HEIGHT - MARGIN - (py - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN);
        (sx, sy)
    }
}

fn header(out: &mut String, title: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {MARGIN} V{y0} H{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    for (v, anchor, x, y) in [
        (frame.x.0, "start", x0, y0 + 15.0),
        (frame.x.1, "end", WIDTH - MARGIN, y0 + 15.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.2}</text>"#);
    }
    for (v, y) in [(frame.y.0, y0), (frame.y.1, MARGIN + 10.0)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.2}</text>"#, x0 - 4.0);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot of `(x, y, class)` points.
pub fn scatter(title: &str, points: &[(f64, f64, usize)]) -> String {
    let frame = Frame::fit(points.iter().map(|p| (p.0, p.1)));
    let mut out = String::new();
    header(&mut out, title, &frame);
    for &(x, y, c) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let (sx, sy) = frame.map(x, y);
        let _ = writeln!(out, r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="1.5" fill="{}" fill-opacity="0.6"/>"#, color(c));
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per named series, with a legend.
pub fn lines(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.1.iter().copied()));
    let mut out = String::new();
    header(&mut out, title, &frame);
    for (i, (name, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| {
                let (sx, sy) = frame.map(x, y);
                format!("{sx:.2},{sy:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            path.join(" "),
            color(i)
        );
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            color(i),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
