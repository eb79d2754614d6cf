//! Minimal static SVG charts for sweep and campaign reports.

use std::fs;
use std::io;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_B: f64 = 60.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_R: f64 = 20.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn axis_frame(title: &str, y_label: &str, y_max: f64) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}' \
         font-family='sans-serif' font-size='12'>\n\
         <rect width='100%' height='100%' fill='white'/>\n\
         <text x='{}' y='24' text-anchor='middle' font-size='15'>{title}</text>\n",
        WIDTH / 2.0
    ));
    // y axis with 5 ticks
    for k in 0..=5 {
        let frac = k as f64 / 5.0;
        let y = HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B);
        let value = frac * y_max;
        s.push_str(&format!(
            "<line x1='{MARGIN_L}' y1='{y}' x2='{}' y2='{y}' stroke='#ddd'/>\n\
             <text x='{}' y='{}' text-anchor='end'>{value:.3}</text>\n",
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x='16' y='{}' transform='rotate(-90 16 {})' text-anchor='middle'>{y_label}</text>\n",
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0,
        (HEIGHT - MARGIN_B + MARGIN_T) / 2.0
    ));
    s
}

fn scale_y(v: f64, y_max: f64) -> f64 {
    HEIGHT - MARGIN_B - (v / y_max).min(1.0) * (HEIGHT - MARGIN_T - MARGIN_B)
}

/// Multi-series line chart over shared x labels.
pub fn line_chart(
    path: &Path,
    title: &str,
    y_label: &str,
    x_labels: &[String],
    series: &[(String, Vec<f64>)],
) -> io::Result<()> {
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(1e-12, f64::max)
        * 1.1;
    let mut svg = axis_frame(title, y_label, y_max);
    let span = (WIDTH - MARGIN_L - MARGIN_R) / (x_labels.len().max(2) - 1) as f64;
    for (i, label) in x_labels.iter().enumerate() {
        let x = MARGIN_L + i as f64 * span;
        svg.push_str(&format!(
            "<text x='{x}' y='{}' text-anchor='middle'>{label}</text>\n",
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    for (s_idx, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[s_idx % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{},{}", MARGIN_L + i as f64 * span, scale_y(*v, y_max)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill='none' stroke='{color}' stroke-width='2' points='{}'/>\n",
            points.join(" ")
        ));
        for p in &points {
            let (x, y) = p.split_once(',').unwrap();
            svg.push_str(&format!("<circle cx='{x}' cy='{y}' r='3' fill='{color}'/>\n"));
        }
        svg.push_str(&format!(
            "<text x='{}' y='{}' fill='{color}'>{name}</text>\n",
            WIDTH - MARGIN_R - 150.0,
            MARGIN_T + 16.0 * s_idx as f64 + 8.0
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}

/// Bar chart with one bar per label.
pub fn bar_chart(
    path: &Path,
    title: &str,
    y_label: &str,
    labels: &[String],
    values: &[f64],
) -> io::Result<()> {
    let y_max = values.iter().copied().fold(1e-12, f64::max) * 1.1;
    let mut svg = axis_frame(title, y_label, y_max);
    let slot = (WIDTH - MARGIN_L - MARGIN_R) / labels.len().max(1) as f64;
    for (i, (label, value)) in labels.iter().zip(values).enumerate() {
        let x = MARGIN_L + i as f64 * slot + slot * 0.15;
        let y = scale_y(*value, y_max);
        svg.push_str(&format!(
            "<rect x='{x}' y='{y}' width='{}' height='{}' fill='{}'/>\n",
            slot * 0.7,
            HEIGHT - MARGIN_B - y,
            PALETTE[0]
        ));
        svg.push_str(&format!(
            "<text x='{}' y='{}' text-anchor='end' transform='rotate(-45 {} {})'>{label}</text>\n",
            x + slot * 0.35,
            HEIGHT - MARGIN_B + 16.0,
            x + slot * 0.35,
            HEIGHT - MARGIN_B + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}
