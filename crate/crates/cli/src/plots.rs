//! Dependency-free SVG plots: bar charts for variant comparisons and line
//! charts for data-efficiency curves.

use crate::Result;
use std::path::Path;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 80.0;

const SERIES_COLORS: [&str; 6] = ["#2266aa", "#cc5533", "#339955", "#886699", "#aa8822", "#557788"];

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{x}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{title}</text>\n",
        x = WIDTH / 2.0
    )
}

fn nice_ticks(max: f64) -> Vec<f64> {
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| max / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let mut ticks = vec![0.0];
    let mut t = step;
    while t <= max * 1.0001 {
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Vertical bar chart; one bar per label.
pub fn bar_chart(path: &Path, title: &str, y_label: &str, labels: &[String], values: &[f64]) -> Result<()> {
    assert_eq!(labels.len(), values.len());
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let max = values.iter().cloned().fold(0.0f64, f64::max).max(1e-9) * 1.1;
    let mut svg = svg_header(title);
    for tick in nice_ticks(max) {
        let y = MARGIN_T + plot_h * (1.0 - tick / max);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{x2}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{tx}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{tick:.2}</text>\n",
            x2 = WIDTH - MARGIN_R,
            tx = MARGIN_L - 6.0,
            ty = y + 4.0
        ));
    }
    let n = labels.len() as f64;
    let slot = plot_w / n;
    let bar_w = slot * 0.62;
    for (i, (label, &v)) in labels.iter().zip(values.iter()).enumerate() {
        let x = MARGIN_L + slot * i as f64 + (slot - bar_w) / 2.0;
        let h = plot_h * (v / max);
        let y = MARGIN_T + plot_h - h;
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" fill=\"#2266aa\"/>\n\
             <text x=\"{cx:.1}\" y=\"{vy:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{v:.3}</text>\n\
             <text x=\"{cx:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" transform=\"rotate(-40 {cx:.1} {ly:.1})\">{label}</text>\n",
            cx = x + bar_w / 2.0,
            vy = y - 4.0,
            ly = MARGIN_T + plot_h + 16.0
        ));
    }
    svg.push_str(&axis_labels(y_label, ""));
    svg.push_str("</svg>\n");
    crate::formats::write_atomic(path, svg.as_bytes())
}

/// Multi-series line chart with markers and a legend.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let x_min = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).max(x_min + 1e-9);
    let y_max = all.iter().map(|p| p.1).fold(0.0f64, f64::max).max(1e-9) * 1.1;

    let sx = |x: f64| MARGIN_L + plot_w * (x - x_min) / (x_max - x_min);
    let sy = |y: f64| MARGIN_T + plot_h * (1.0 - y / y_max);

    let mut svg = svg_header(title);
    for tick in nice_ticks(y_max) {
        let y = sy(tick);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{x2}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{tx}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{tick:.2}</text>\n",
            x2 = WIDTH - MARGIN_R,
            tx = MARGIN_L - 6.0,
            ty = y + 4.0
        ));
    }
    let mut xs: Vec<f64> = all.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for &x in &xs {
        let px = sx(x);
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x}</text>\n",
            ty = MARGIN_T + plot_h + 18.0
        ));
    }
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let points: Vec<String> = sorted.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
        for &(x, y) in &sorted {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.4\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        let ly = MARGIN_T + 8.0 + 18.0 * si as f64;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{ry:.1}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n\
             <text x=\"{tx}\" y=\"{ty:.1}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>\n",
            lx = WIDTH - MARGIN_R - 150.0,
            ry = ly - 2.0,
            tx = WIDTH - MARGIN_R - 130.0,
            ty = ly + 4.0
        ));
    }
    svg.push_str(&axis_labels(y_label, x_label));
    svg.push_str("</svg>\n");
    crate::formats::write_atomic(path, svg.as_bytes())
}

fn axis_labels(y_label: &str, x_label: &str) -> String {
    let mut s = String::new();
    if !y_label.is_empty() {
        s.push_str(&format!(
            "<text x=\"18\" y=\"{cy}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {cy})\">{y_label}</text>\n",
            cy = HEIGHT / 2.0
        ));
    }
    if !x_label.is_empty() {
        s.push_str(&format!(
            "<text x=\"{cx}\" y=\"{by}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
            cx = WIDTH / 2.0,
            by = HEIGHT - 14.0
        ));
    }
    s
}
