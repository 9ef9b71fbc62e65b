//! Static SVG 1.1 scatterplots, biplots and histograms.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b15928",
];

/// Scatter points grouped by label.
pub struct Groups {
    pub names: Vec<String>,
    /// Group index of each observation.
    pub index: Vec<usize>,
}

impl Groups {
    /// Groups observations by label; numeric labels sort numerically.
    pub fn from_labels(labels: Option<&[String]>, n: usize) -> Self {
        let Some(labels) = labels else {
            return Self {
                names: vec![String::new()],
                index: vec![0; n],
            };
        };
        let mut names: Vec<String> = labels.to_vec();
        names.sort();
        names.dedup();
        if names.iter().all(|s| s.parse::<f64>().is_ok()) {
            names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
        }
        let index = labels
            .iter()
            .map(|l| names.iter().position(|n| n == l).expect("label present"))
            .collect();
        Self { names, index }
    }

    fn labelled(&self) -> bool {
        self.names.len() > 1 || !self.names[0].is_empty()
    }
}

pub struct Arrow {
    pub label: String,
    pub dx: f64,
    pub dy: f64,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Round numbers spanning `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", if v.abs() < 1e-12 { 0.0 } else { v });
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| {
            let span = if b > a { b - a } else { a.abs().max(1.0) };
            (a - 0.05 * span, b + 0.05 * span)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    if !title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            escape(title)
        );
    }
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (t, b) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for v in ticks(f.x0, f.x1) {
        let x = f.px(v);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            b + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            b + 18.0,
            fmt_tick(v)
        );
    }
    for v in ticks(f.y0, f.y1) {
        let y = f.py(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="black"/>"#,
            l - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 8.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, groups: &Groups) {
    if !groups.labelled() {
        return;
    }
    let x = WIDTH - MARGIN_RIGHT + 16.0;
    for (k, name) in groups.names.iter().enumerate() {
        let y = MARGIN_TOP + 8.0 + 18.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#,
            y - 8.0,
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 16.0,
            y + 1.0,
            escape(name)
        );
    }
}

/// Scatterplot of `(x, y)` pairs coloured by group, with optional biplot
/// arrows drawn from the origin.
pub fn scatter(xs: &[f64], ys: &[f64], groups: &Groups, arrows: &[Arrow], labels: (&str, &str), title: &str) -> String {
    let range = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
    };
    let (mut x0, mut x1) = range(xs);
    let (mut y0, mut y1) = range(ys);
    // rows of the basis scaled so the longest reaches 80% of the nearest data edge
    let reach = [x0.abs(), x1.abs(), y0.abs(), y1.abs()]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let longest = arrows.iter().map(|a| a.dx.hypot(a.dy)).fold(0.0, f64::max);
    let scale = if longest > 0.0 && reach.is_finite() && reach > 0.0 {
        0.8 * reach / longest
    } else {
        1.0
    };
    for a in arrows {
        x0 = x0.min(a.dx * scale);
        x1 = x1.max(a.dx * scale);
        y0 = y0.min(a.dy * scale);
        y1 = y1.max(a.dy * scale);
    }
    let f = Frame::new(x0, x1, y0, y1);

    let mut out = String::new();
    header(&mut out, title);
    if !arrows.is_empty() {
        let _ = writeln!(
            out,
            r#"<defs><marker id="head" markerWidth="8" markerHeight="8" refX="7" refY="4" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="black"/></marker></defs>"#
        );
    }
    axes(&mut out, &f, labels.0, labels.1);
    for k in 0..groups.names.len() {
        let _ = writeln!(out, r#"<g fill="{}" fill-opacity="0.7">"#, PALETTE[k % PALETTE.len()]);
        for i in (0..xs.len()).filter(|&i| groups.index[i] == k) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#,
                f.px(xs[i]),
                f.py(ys[i])
            );
        }
        let _ = writeln!(out, "</g>");
    }
    for a in arrows {
        let (ox, oy) = (f.px(0.0), f.py(0.0));
        let (tx, ty) = (f.px(a.dx * scale), f.py(a.dy * scale));
        let _ = writeln!(
            out,
            r#"<line x1="{ox:.2}" y1="{oy:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="black" marker-end="url(#head)"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            tx + 3.0,
            ty - 3.0,
            escape(&a.label)
        );
    }
    legend(&mut out, groups);
    out.push_str("</svg>\n");
    out
}

/// Overlaid per-group histograms on common bins.
pub fn histogram(xs: &[f64], groups: &Groups, bins: usize, xlabel: &str, title: &str) -> String {
    let bins = bins.max(1);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![vec![0usize; bins]; groups.names.len()];
    for (i, &x) in xs.iter().enumerate() {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[groups.index[i]][b] += 1;
    }
    let top = counts.iter().flatten().copied().max().unwrap_or(1) as f64;
    let f = Frame {
        x0: lo - 0.5 * width,
        x1: lo + (bins as f64 + 0.5) * width,
        y0: 0.0,
        y1: top * 1.05,
    };

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, "count");
    for (k, row) in counts.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<g fill="{}" fill-opacity="0.5" stroke="{}">"#,
            PALETTE[k % PALETTE.len()],
            PALETTE[k % PALETTE.len()]
        );
        for (b, &c) in row.iter().enumerate().filter(|(_, &c)| c > 0) {
            let left = f.px(lo + b as f64 * width);
            let right = f.px(lo + (b + 1) as f64 * width);
            let y = f.py(c as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{left:.2}" y="{y:.2}" width="{:.2}" height="{:.2}"/>"#,
                right - left,
                f.py(0.0) - y
            );
        }
        let _ = writeln!(out, "</g>");
    }
    legend(&mut out, groups);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(fmt_tick(0.5), "0.5");
        assert_eq!(fmt_tick(-2.0), "-2");
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let labels: Vec<String> = ["10", "2", "1", "2"].iter().map(|s| s.to_string()).collect();
        let g = Groups::from_labels(Some(&labels), 4);
        assert_eq!(g.names, vec!["1", "2", "10"]);
        assert_eq!(g.index, vec![2, 1, 0, 1]);
    }

    #[test]
    fn text_is_escaped() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }
}
