//! Minimal SVG charts. Every chart comes with a TSV of the plotted numbers,
//! formatted identically to the value labels in the SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::Result;
use crate::stats::Interval;

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Fixed six-decimal rendering shared by SVG labels and TSV cells.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.6}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSeries {
    pub name: String,
    pub points: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub group: String,
    pub label: String,
    pub value: f64,
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub svg: String,
    pub tsv: String,
}

impl Chart {
    /// Writes `path` and the TSV next to it (same stem, `.tsv`).
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.svg)?;
        fs::write(path.with_extension("tsv"), &self.tsv)?;
        Ok(())
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-size=\"14\">{}</text>\n",
        esc(title)
    )
}

fn empty(title: &str) -> String {
    warn!("{title}: nothing to plot");
    let mut s = header(title);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\">no data</text>", W / 2.0 - 24.0, H / 2.0);
    s.push_str("</svg>\n");
    s
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart; x positions are the distinct point labels in first-seen order.
pub fn line_chart(title: &str, series: &[LineSeries]) -> Chart {
    let mut tsv = String::from("series\tx\ty\n");
    for s in series {
        for (x, y) in &s.points {
            let _ = writeln!(tsv, "{}\t{x}\t{}", s.name, fmt_num(*y));
        }
    }
    if series.iter().all(|s| s.points.is_empty()) {
        return Chart { svg: empty(title), tsv };
    }
    let mut xs: Vec<&str> = vec![];
    for s in series {
        for (x, _) in &s.points {
            if !xs.contains(&x.as_str()) {
                xs.push(x);
            }
        }
    }
    let (lo, hi) = y_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |i: usize| {
        if xs.len() == 1 {
            W / 2.0
        } else {
            PAD + i as f64 * (W - 2.0 * PAD) / (xs.len() - 1) as f64
        }
    };
    let py = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let mut svg = header(title);
    let _ = writeln!(svg, "<line x1=\"{PAD}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"#999\"/>", py(0.0), W - PAD, py(0.0));
    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let coords: Vec<(f64, f64)> = s
            .points
            .iter()
            .map(|(x, y)| (px(xs.iter().position(|v| v == x).unwrap()), py(*y)))
            .collect();
        if coords.len() > 1 {
            let pts: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>", pts.join(" "));
        }
        for ((x, y), (_, v)) in coords.iter().zip(&s.points) {
            let _ = writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>");
            let _ = writeln!(
                svg,
                "<text class=\"value\" x=\"{x:.2}\" y=\"{:.2}\" font-size=\"8\">{}</text>",
                y - 5.0,
                fmt_num(*v)
            );
        }
        let _ = writeln!(
            svg,
            "<text class=\"legend\" x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"{color}\">{}</text>",
            W - PAD - 120.0,
            40.0 + 12.0 * si as f64,
            esc(&s.name)
        );
    }
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(svg, "<text class=\"tick\" x=\"{:.2}\" y=\"{}\" font-size=\"8\">{}</text>", px(i), H - PAD + 14.0, esc(x));
    }
    svg.push_str("</svg>\n");
    Chart { svg, tsv }
}

/// Bar chart with optional 95% CI whiskers, bars in input order.
pub fn bar_chart(title: &str, bars: &[Bar]) -> Chart {
    let mut tsv = String::from("group\tlabel\tvalue\tci_lo\tci_hi\n");
    for b in bars {
        let (l, h) = b.ci.map(|c| (fmt_num(c.lo), fmt_num(c.hi))).unwrap_or_default();
        let _ = writeln!(tsv, "{}\t{}\t{}\t{l}\t{h}", b.group, b.label, fmt_num(b.value));
    }
    if bars.is_empty() {
        return Chart { svg: empty(title), tsv };
    }
    let (lo, hi) = y_range(bars.iter().flat_map(|b| {
        let mut v = vec![b.value];
        if let Some(c) = b.ci {
            v.extend([c.lo, c.hi]);
        }
        v
    }));
    let py = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let slot = (W - 2.0 * PAD) / bars.len() as f64;
    let mut groups: Vec<&str> = vec![];
    let mut svg = header(title);
    for (i, b) in bars.iter().enumerate() {
        if !groups.contains(&b.group.as_str()) {
            groups.push(&b.group);
        }
        let color = COLORS[groups.iter().position(|g| *g == b.group).unwrap() % COLORS.len()];
        let x = PAD + i as f64 * slot;
        let (top, bottom) = (py(b.value.max(0.0)), py(b.value.min(0.0)));
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
            x + slot * 0.1,
            slot * 0.8,
            bottom - top
        );
        let cx = x + slot / 2.0;
        if let Some(c) = b.ci {
            let _ = writeln!(svg, "<line class=\"ci\" x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", py(c.lo), py(c.hi));
            for v in [c.lo, c.hi] {
                let _ = writeln!(svg, "<text class=\"value\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"7\">{}</text>", cx + 3.0, py(v), fmt_num(v));
            }
        }
        let _ = writeln!(svg, "<text class=\"value\" x=\"{:.2}\" y=\"{:.2}\" font-size=\"8\">{}</text>", x + slot * 0.1, top - 4.0, fmt_num(b.value));
        let _ = writeln!(svg, "<text class=\"tick\" x=\"{:.2}\" y=\"{}\" font-size=\"7\">{}</text>", x + slot * 0.1, H - PAD + 12.0, esc(&format!("{} {}", b.group, b.label)));
    }
    svg.push_str("</svg>\n");
    Chart { svg, tsv }
}

/// Numbers in `<text class="value">` nodes, in document order.
pub fn value_labels(svg: &str) -> Vec<String> {
    let open = "<text class=\"value\"";
    let mut out = vec![];
    let mut rest = svg;
    while let Some(i) = rest.find(open) {
        rest = &rest[i + open.len()..];
        let start = rest.find('>').map(|j| j + 1).unwrap_or(0);
        let end = rest.find("</text>").unwrap_or(rest.len());
        out.push(rest[start..end].to_string());
        rest = &rest[end..];
    }
    out
}
