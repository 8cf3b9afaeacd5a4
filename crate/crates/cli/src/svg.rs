//! Minimal standalone SVG plots.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 56.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite()) {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>
<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>
"#,
        W / 2.0,
        escape(title),
        W / 2.0,
        H - 12.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
        H - MARGIN,
        W - MARGIN,
        H - MARGIN,
        H - MARGIN,
    );
    for (v, x) in [(f.x.0, f.px(f.x.0)), (f.x.1, f.px(f.x.1))] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#, H - MARGIN + 16.0);
    }
    for (v, y) in [(f.y.0, f.py(f.y.0)), (f.y.1, f.py(f.y.1))] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0);
    }
    s
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

pub fn scatter(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let (x0, x1) = range(points.iter().map(|p| p.0));
    let (y0, y1) = range(points.iter().map(|p| p.1));
    let f = Frame::new((x0.min(0.0), x1), (y0.min(0.0), y1));
    let mut s = header(title, xlabel, ylabel, &f);
    for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#, f.px(x), f.py(y));
    }
    s.push_str("</svg>\n");
    s
}

pub fn histogram(title: &str, xlabel: &str, values: &[f64], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = range(values.iter().copied());
    let fx = Frame::new((lo.min(0.0), hi), (0.0, 1.0));
    let width = (fx.x.1 - fx.x.0) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let b = (((v - fx.x.0) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame::new(fx.x, (0.0, top));
    let mut s = header(title, xlabel, "count", &f);
    for (i, &c) in counts.iter().enumerate() {
        let (a, b) = (f.px(fx.x.0 + i as f64 * width), f.px(fx.x.0 + (i + 1) as f64 * width));
        let y = f.py(c as f64);
        let _ = writeln!(
            s,
            r#"<rect x="{a:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="steelblue" stroke="white"/>"#,
            (b - a).max(0.0),
            f.py(0.0) - y
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, values: &[f64]) -> String {
    let (y0, y1) = range(values.iter().copied());
    let f = Frame::new((0.0, values.len().saturating_sub(1) as f64), (y0.min(0.0), y1));
    let mut s = header(title, xlabel, ylabel, &f);
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, &v)| format!("{:.1},{:.1}", f.px(i as f64), f.py(v)))
        .collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#, pts.join(" "));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_value() {
        let s = histogram("t", "x", &[0.0, 0.1, 0.1, 0.9, 1.0], 4);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<rect x=").count(), 4);
    }

    #[test]
    fn empty_inputs_render() {
        assert!(scatter("a<b", "x", "y", &[]).contains("a&lt;b"));
        assert!(histogram("h", "x", &[], 5).contains("</svg>"));
        assert!(line_plot("l", "x", "y", &[f64::NAN, 1.0]).contains("polyline"));
    }

    #[test]
    fn scatter_points() {
        let s = scatter("s", "x", "y", &[(0.0, 0.0), (1.0, 2.0)]);
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
