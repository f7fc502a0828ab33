//! Small SVG line charts for cumulative-code curves and their regressions.

use std::fmt::Write as _;

use crate::metrics::LinearFit;

const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;
const LEGEND: f64 = 190.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// (position, value) with 1-based positions.
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn new(series: &[Series]) -> Frame {
        let pts = series.iter().flat_map(|s| s.points.iter());
        let (x_max, y_max) = pts.fold((1.0f64, 1.0f64), |(xm, ym), &(x, y)| (xm.max(x), ym.max(y)));
        Frame { x_max, y_max: nice_ceiling(y_max) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - 1.0) / (self.x_max - 1.0).max(1.0) * (W - LEGEND - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - y / self.y_max * (H - 2.0 * MARGIN)
    }
}

fn nice_ceiling(v: f64) -> f64 {
    let step = 10f64.powf(v.log10().floor()).max(1.0);
    (v / step).ceil() * step
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlaid line chart of the given series.
pub fn line_chart_svg(title: &str, series: &[Series], notes: &[String]) -> String {
    let f = Frame::new(series);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="20" font-size="14">{}</text>"#, escape(title));
    let (x0, y0, x1, y1) = (f.px(1.0), f.py(0.0), f.px(f.x_max), f.py(f.y_max));
    let _ = writeln!(s, r#"<path d="M{x0},{y1} V{y0} H{x1}" stroke="black" fill="none"/>"#);
    for k in 1..=(f.x_max as usize) {
        let x = f.px(k as f64);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#, y0 + 15.0);
    }
    for k in 0..=4 {
        let v = f.y_max * k as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v}</text>"#, x0 - 5.0, y + 4.0);
        let _ = writeln!(s, r##"<path d="M{x0},{y:.1} H{x1}" stroke="#ddd"/>"##);
    }
    for (i, se) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = se.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y))).collect();
        let dash = if se.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 * i as f64;
        let lx = W - LEGEND + 10.0;
        let _ = writeln!(s, r#"<path d="M{lx},{ly} h18" stroke="{colour}" stroke-width="2"{dash}/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 22.0, ly + 4.0, escape(&se.label));
    }
    for (i, note) in notes.iter().enumerate() {
        let y = H - MARGIN + 32.0 + 12.0 * i as f64;
        if y < H {
            let _ = writeln!(s, r#"<text x="{MARGIN}" y="{y:.1}">{}</text>"#, escape(note));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Points of a fitted line at 1-based display positions `1..=n`
/// (the fit itself uses zero-based x).
pub fn fit_series(label: &str, fit: &LinearFit, n: usize) -> Series {
    Series {
        label: label.to_string(),
        points: (0..n).map(|k| ((k + 1) as f64, fit.at(k as f64))).collect(),
        dashed: true,
    }
}

pub fn fit_annotation(label: &str, fit: &LinearFit) -> String {
    format!("{label}: y = {:.2}x + {:.2}", fit.slope, fit.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let a = Series { label: "TCC".into(), points: vec![(1.0, 15.0), (2.0, 29.0)], dashed: false };
        let fit = LinearFit { slope: 4.68, intercept: 21.44, n_points: 12 };
        let b = fit_series("fit", &fit, 12);
        let svg = line_chart_svg("t", &[a, b], &[fit_annotation("UCC", &fit)]);
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert!(svg.contains("y = 4.68x + 21.44"));
    }

    #[test]
    fn ceiling() {
        assert_eq!(nice_ceiling(175.0), 200.0);
        assert_eq!(nice_ceiling(7.0), 7.0);
    }
}
