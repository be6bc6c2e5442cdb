//! SVG line chart of a spectrogram: NCR and its deviation from the
//! five-year median against reference publication year.

use crate::model::SpectrogramRow;
use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

const NCR_COLOR: &str = "#1f4e79";
const DEV_COLOR: &str = "#c0504d";

/// Tick step giving roughly `target` intervals over `span`: 1, 2 or 5 times a
/// power of ten.
fn nice_step(span: f64, target: f64) -> f64 {
    if span <= 0.0 {
        return 1.0;
    }
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    step.max(1.0)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the chart. Output depends only on `rows` and `title`.
pub fn render_svg(rows: &[SpectrogramRow], title: &str) -> String {
    let (x_min, x_max) = match (rows.iter().map(|r| r.rpy).min(), rows.iter().map(|r| r.rpy).max()) {
        (Some(a), Some(b)) if a < b => (a as f64, b as f64),
        (Some(a), Some(_)) => (a as f64 - 1.0, a as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let y_hi = rows
        .iter()
        .map(|r| r.ncr as f64)
        .chain(rows.iter().map(|r| r.median_dev))
        .fold(1.0f64, f64::max);
    let y_lo = rows.iter().map(|r| r.median_dev).fold(0.0f64, f64::min);
    let y_step = nice_step(y_hi - y_lo, 6.0);
    let (y_lo, y_hi) = ((y_lo / y_step).floor() * y_step, (y_hi / y_step).ceil() * y_step);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    if !title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
    }

    // grid and y ticks
    let mut y = y_lo;
    while y <= y_hi + y_step / 2.0 {
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e0e0e0"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py + 4.0,
            y
        );
        y += y_step;
    }
    let x_step = nice_step(x_max - x_min, 10.0);
    let mut x = (x_min / x_step).ceil() * x_step;
    while x <= x_max {
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000000"/>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 20.0,
            x
        );
        x += x_step;
    }

    // axes
    let _ = writeln!(
        svg,
        r##"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="#000000"/>"##,
        TOP + plot_h
    );
    let zero = sy(0.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{LEFT:.2}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#000000"/>"##,
        LEFT + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Reference publication year</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">Number of cited references</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    if !rows.is_empty() {
        let points = |f: &dyn Fn(&SpectrogramRow) -> f64| {
            rows.iter()
                .map(|r| format!("{:.2},{:.2}", sx(r.rpy as f64), sy(f(r))))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{NCR_COLOR}" stroke-width="1.5" points="{}"/>"#,
            points(&|r| r.ncr as f64)
        );
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{DEV_COLOR}" stroke-width="1.5" stroke-dasharray="4 3" points="{}"/>"#,
            points(&|r| r.median_dev)
        );
    }

    // legend
    let lx = LEFT + plot_w - 230.0;
    let ly = TOP + 12.0;
    let _ = writeln!(
        svg,
        r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{NCR_COLOR}" stroke-width="1.5"/>"#,
        lx + 24.0
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">NCR</text>"#, lx + 30.0, ly + 4.0);
    let ly2 = ly + 18.0;
    let _ = writeln!(
        svg,
        r#"<line x1="{lx:.2}" y1="{ly2:.2}" x2="{:.2}" y2="{ly2:.2}" stroke="{DEV_COLOR}" stroke-width="1.5" stroke-dasharray="4 3"/>"#,
        lx + 24.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}">Deviation from 5-year median</text>"#,
        lx + 30.0,
        ly2 + 4.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rpy: i32, ncr: u64, median_dev: f64) -> SpectrogramRow {
        SpectrogramRow { rpy, ncr, median_dev }
    }

    #[test]
    fn two_series() {
        let svg = render_svg(&[row(1960, 3, 0.0), row(1961, 10, 7.0), row(1962, 2, -1.0)], "");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("Reference publication year"));
        assert!(svg.contains("Deviation from 5-year median"));
    }

    #[test]
    fn empty_has_axes_only() {
        let svg = render_svg(&[], "");
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.contains("<line"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn deterministic_and_escaped() {
        let rows = [row(1900, 1, 0.5)];
        assert_eq!(render_svg(&rows, "a < b"), render_svg(&rows, "a < b"));
        assert!(render_svg(&rows, "a < b").contains("a &lt; b"));
    }

    #[test]
    fn steps() {
        assert_eq!(nice_step(100.0, 10.0), 10.0);
        assert_eq!(nice_step(37.0, 6.0), 10.0);
        assert_eq!(nice_step(3.0, 10.0), 1.0);
        assert_eq!(nice_step(280.0, 10.0), 50.0);
    }
}
