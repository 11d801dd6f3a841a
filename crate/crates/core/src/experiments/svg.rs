//! Minimal line charts written directly as SVG 1.1.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `None` values break the line.
    pub points: Vec<(f64, Option<f64>)>,
    /// `(x, lo, hi)` of a shaded interval; entries with `None` break it.
    pub band: Vec<(f64, Option<(f64, f64)>)>,
    pub dashed: bool,
    /// Index into the palette; series sharing a color share a condition.
    pub color: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; derived from the data when absent.
    pub y_range: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Roughly five round tick values covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn runs<T: Copy>(items: &[(f64, Option<T>)]) -> Vec<Vec<(f64, T)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &(x, v) in items {
        match v {
            Some(v) => cur.push((x, v)),
            None if !cur.is_empty() => out.push(std::mem::take(&mut cur)),
            None => {}
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl Chart {
    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.extend(y);
            }
            for &(x, b) in &s.band {
                xs.push(x);
                if let Some((lo, hi)) = b {
                    ys.push(lo);
                    ys.push(hi);
                }
            }
        }
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() && hi > lo {
                (lo, hi)
            } else if lo.is_finite() {
                (lo - 0.5, lo + 0.5)
            } else {
                (0.0, 1.0)
            }
        };
        let x = span(&xs);
        let y = self.y_range.unwrap_or_else(|| {
            let (lo, hi) = span(&ys);
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        });
        (x, y)
    }

    /// The chart as a standalone SVG document. `stamp` adds a generation
    /// comment; leave it out for reproducible output.
    pub fn render(&self, stamp: Option<u64>) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut o = String::new();
        o.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        if let Some(t) = stamp {
            let _ = writeln!(o, "<!-- generated at unix time {t} -->");
        }
        let _ = writeln!(
            o,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(o, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            o,
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        // Grid and ticks.
        o.push_str("<g stroke=\"#dddddd\" stroke-width=\"1\">\n");
        for t in ticks(x0, x1) {
            let _ = writeln!(o, "<line x1=\"{0:.2}\" y1=\"{TOP:.2}\" x2=\"{0:.2}\" y2=\"{1:.2}\"/>", sx(t), TOP + ph);
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(o, "<line x1=\"{LEFT:.2}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\"/>", sy(t), LEFT + pw);
        }
        o.push_str("</g>\n<g fill=\"#333333\">\n");
        for t in ticks(x0, x1) {
            let _ = writeln!(
                o,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                sx(t),
                TOP + ph + 18.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(
                o,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                LEFT - 6.0,
                sy(t) + 4.0,
                tick_label(t)
            );
        }
        o.push_str("</g>\n");
        let _ = writeln!(
            o,
            "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#333333\"/>"
        );
        let _ = writeln!(
            o,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            LEFT + pw / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            "<text x=\"18\" y=\"{0:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2})\">{1}</text>",
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            let color = PALETTE[s.color % PALETTE.len()];
            for run in runs(&s.band) {
                if run.len() < 2 {
                    continue;
                }
                let mut pts: Vec<String> = run
                    .iter()
                    .map(|&(x, (_, hi))| format!("{:.2},{:.2}", sx(x), sy(hi)))
                    .collect();
                pts.extend(
                    run.iter()
                        .rev()
                        .map(|&(x, (lo, _))| format!("{:.2},{:.2}", sx(x), sy(lo))),
                );
                let _ = writeln!(
                    o,
                    "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>",
                    pts.join(" ")
                );
            }
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            for run in runs(&s.points) {
                let pts: Vec<String> = run
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                if pts.len() == 1 {
                    let (x, y) = run[0];
                    let _ = writeln!(
                        o,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                        sx(x),
                        sy(y)
                    );
                } else {
                    let _ = writeln!(
                        o,
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>",
                        pts.join(" ")
                    );
                }
            }
        }

        // Legend.
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[s.color % PALETTE.len()];
            let y = TOP + 10.0 + 20.0 * i as f64;
            let x = LEFT + pw + 14.0;
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                o,
                "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
                x + 24.0
            );
            let _ = writeln!(
                o,
                "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
                x + 30.0,
                y + 4.0,
                escape(&s.label)
            );
        }
        o.push_str("</svg>\n");
        o
    }
}
