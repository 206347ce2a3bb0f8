//! Polyline SVG plots of RD curves: quality against log-scaled bitrate.

use std::fmt::Write;

use freqsp::rdcurve::RdPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<RdPoint>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders every series on shared axes. Points are drawn in bitrate order;
/// non-positive bitrates are skipped since the x axis is logarithmic.
pub fn rd_plot(series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| &s.points).filter(|p| p.bitrate_kbps > 0.0);
    let span = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut pts().map(|p| p.bitrate_kbps.log10()));
    let (y0, y1) = span(&mut pts().map(|p| p.quality));
    let sx = |r: f64| MARGIN + (r.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |q: f64| HEIGHT - MARGIN - (q - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<polyline fill="none" stroke="black" points="{left},{top} {left},{bottom} {right},{bottom}"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">bitrate (kbps, log) {:.0} to {:.0}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        10f64.powf(x0),
        10f64.powf(x1)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">quality {y0:.2} to {y1:.2}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut sorted: Vec<&RdPoint> = s.points.iter().filter(|p| p.bitrate_kbps > 0.0).collect();
        sorted.sort_by(|a, b| a.bitrate_kbps.total_cmp(&b.bitrate_kbps));
        let coords: Vec<String> = sorted.iter().map(|p| format!("{:.2},{:.2}", sx(p.bitrate_kbps), sy(p.quality))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{}</text>"#,
            right - 120.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let s = |name: &str, k: f64| Series {
            name: name.into(),
            points: (0..4).map(|i| RdPoint::new(k * 2f64.powi(i), 30.0 + 3.0 * i as f64)).collect(),
        };
        let svg = rd_plot(&[s("a", 100.0), s("b<c", 150.0)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn empty_input_still_renders() {
        assert!(rd_plot(&[]).ends_with("</svg>\n"));
    }
}
