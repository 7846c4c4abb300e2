//! Minimal SVG line plots: polylines, point markers and an axis box.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// One drawn series.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a connected line.
    pub markers: bool,
}

impl Series {
    pub fn line(label: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.to_string(),
            color,
            points,
            markers: false,
        }
    }

    pub fn markers(label: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Series {
            markers: true,
            ..Series::line(label, color, points)
        }
    }
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series
        .iter()
        .flat_map(|s| &s.points)
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        if hi - lo < 1e-12 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    (x0, x1, y0, y1)
}

/// Renders the series with equal scaling on both axes, so spirals keep
/// their shape. Output depends only on the inputs.
pub fn render_svg(title: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let span = (x1 - x0).max(y1 - y0);
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let scale = (WIDTH - 2.0 * MARGIN) / span;
    let px = |x: f64| WIDTH / 2.0 + (x - cx) * scale;
    let py = |y: f64| HEIGHT / 2.0 - (y - cy) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        w = WIDTH - 2.0 * MARGIN,
        h = HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for series in series {
        let pts: Vec<(f64, f64)> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| (px(x), py(y)))
            .collect();
        if series.markers {
            let _ = writeln!(s, r#"<g fill="{}">"#, series.color);
            for (x, y) in pts {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"/>"#);
            }
            let _ = writeln!(s, "</g>");
        } else if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                series.color,
                coords.join(" ")
            );
        }
    }
    for (i, series) in series.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            MARGIN + 6.0,
            series.color,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let series = [
            Series::line("truth", "gray", vec![(0.0, 0.0), (1.0, 2.0)]),
            Series::markers("observed", "black", vec![(0.5, 1.0), (f64::NAN, 1.0)]),
        ];
        let a = render_svg("a < b", &series);
        assert_eq!(a, render_svg("a < b", &series));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 1);
        assert!(a.contains("a &lt; b"));
    }

    #[test]
    fn degenerate_input_still_renders() {
        let s = render_svg("empty", &[Series::line("x", "red", vec![(1.0, 1.0)])]);
        assert!(s.contains("<polyline"));
        assert!(render_svg("none", &[]).contains("</svg>"));
    }
}
