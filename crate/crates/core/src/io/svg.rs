//! Static SVG line chart for power curves.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Legend label and `(x, y)` points in ascending `x`.
pub type Curve = (String, Vec<(f64, f64)>);

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#000000", "#1b9e3a", "#d62728", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
];
const DASHES: [&str; 3] = ["2,3", "5,3", "9,4"];
const REFERENCE_LEVELS: [f64; 2] = [0.05, 1.0];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn validate(curves: &[Curve]) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::InvalidDataset("chart needs at least one curve".into()));
    }
    for (label, points) in curves {
        if points.is_empty() {
            return Err(Error::InvalidDataset(format!("curve `{label}` has no points")));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite(format!("curve `{label}`")));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidDataset(format!("curve `{label}` is not ascending in x")));
        }
    }
    Ok(())
}

/// Render curves of rejection rate against true effect, with dashed
/// reference lines at 0.05 and 1.
pub fn power_chart_svg(curves: &[Curve]) -> Result<String> {
    validate(curves)?;
    let xs = curves.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let (mut x_min, mut x_max) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if x_max - x_min < 1e-12 {
        x_min -= 0.5;
        x_max += 0.5;
    }
    let y_data_max = curves
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(1.0f64, f64::max);
    let y_min = curves
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0f64, f64::min);
    let y_max = y_data_max * 1.05;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );

    // axes
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP + plot_h, TOP);
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000000"/>"##
    );
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000000"/>"##
    );
    for k in 0..=5 {
        let x = x_min + (x_max - x_min) * f64::from(k) / 5.0;
        let px = sx(x);
        let _ = writeln!(
            s,
            r##"<line class="tick" x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="#000000"/>"##,
            y0 + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{x:.2}</text>"#,
            y0 + 18.0
        );
    }
    for k in 0..=5 {
        let y = f64::from(k) / 5.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line class="tick" x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#000000"/>"##,
            x0 - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.1}</text>"#,
            x0 - 7.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">true effect γ</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">rejection rate</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for level in REFERENCE_LEVELS {
        let py = sy(level);
        let _ = writeln!(
            s,
            r##"<line class="reference" x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" stroke="#999999" stroke-dasharray="4,4"/>"##
        );
    }

    for (i, (_, points)) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = match i % (DASHES.len() + 1) {
            0 => String::new(),
            k => format!(r#" stroke-dasharray="{}""#, DASHES[k - 1]),
        };
        let _ = writeln!(
            s,
            r#"<polyline class="curve" fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, y) in points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#,
                sx(x),
                sy(y)
            );
        }
    }

    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, (label, _)) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            s,
            r#"<line class="legend-swatch" x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend-entry" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn render_power_chart(curves: &[Curve], path: impl AsRef<Path>) -> Result<()> {
    let svg = power_chart_svg(curves)?;
    std::fs::write(path, svg)?;
    Ok(())
}
