//! Static SVG scatter plot with error bars, written by hand.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One marker. Bounds are absolute coordinates, not offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub series: String,
    pub label: String,
    pub x: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub y: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders points on the unit square `[0,1]²`. Series get palette colors
/// in sorted order, so output depends only on the inputs.
pub fn scatter_svg(points: &[ScatterPoint], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Empty("scatter points"));
    }
    for p in points {
        let vals = [p.x, p.x_lo, p.x_hi, p.y, p.y_lo, p.y_hi];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite coordinate for point {:?}", p.label)));
        }
    }
    let series: Vec<&str> = points
        .iter()
        .map(|p| p.series.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let color = |s: &str| PALETTE[series.iter().position(|&t| t == s).unwrap() % PALETTE.len()];
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + x.clamp(0.0, 1.0) * pw;
    let sy = |y: f64| MARGIN_TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        escape(title)
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (x, y) = (sx(t), sy(t));
        let _ = writeln!(
            o,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
            sy(0.0),
            sy(1.0)
        );
        let _ = writeln!(
            o,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            sx(0.0),
            sx(1.0)
        );
        let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.1}</text>"#, sy(0.0) + 18.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.1}</text>"#, sx(0.0) - 8.0, y + 4.0);
    }
    let _ = writeln!(
        o,
        r#"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        o,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        escape(y_label)
    );

    for p in points {
        let c = color(&p.series);
        let (x, y) = (sx(p.x), sy(p.y));
        let _ = writeln!(o, r#"<g class="point" stroke="{c}" fill="{c}">"#);
        let _ = writeln!(o, "<title>{}</title>", escape(&p.label));
        let _ = writeln!(o, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#, sy(p.y_lo), sy(p.y_hi));
        let _ = writeln!(o, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#, sx(p.x_lo), sx(p.x_hi));
        let _ = writeln!(o, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4"/>"#);
        let _ = writeln!(o, "</g>");
    }

    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(o, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"/>"#, color(s));
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 10.0, y + 4.0, escape(s));
    }
    o.push_str("</svg>\n");
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(series: &str, x: f64, y: f64) -> ScatterPoint {
        ScatterPoint {
            series: series.into(),
            label: format!("n={x}"),
            x,
            x_lo: x - 0.05,
            x_hi: x + 0.05,
            y,
            y_lo: y - 0.1,
            y_hi: y + 0.1,
        }
    }

    #[test]
    fn single_point() {
        let svg = scatter_svg(&[pt("human", 0.4, 0.3)], "t", "x", "y").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches(r#"<g class="point""#).count(), 1);
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn deterministic_and_ordered_colors() {
        let pts = [pt("b", 0.1, 0.2), pt("a", 0.5, 0.5)];
        let one = scatter_svg(&pts, "t", "x", "y").unwrap();
        assert_eq!(one, scatter_svg(&pts, "t", "x", "y").unwrap());
        assert!(one.contains(r##"<g class="point" stroke="#d62728" fill="#d62728">
<title>n=0.1</title>"##));
        assert!(one.contains(r##"<g class="point" stroke="#1f77b4" fill="#1f77b4">
<title>n=0.5</title>"##));
    }

    #[test]
    fn rejects_empty_and_escapes() {
        assert!(scatter_svg(&[], "t", "x", "y").is_err());
        let svg = scatter_svg(&[pt("<m&m>", 0.0, 1.0)], "a<b", "x", "y").unwrap();
        assert!(svg.contains("&lt;m&amp;m&gt;"));
        assert!(svg.contains("a&lt;b"));
        let mut bad = pt("s", 0.1, 0.1);
        bad.y = f64::NAN;
        assert!(scatter_svg(&[bad], "t", "x", "y").is_err());
    }
}
