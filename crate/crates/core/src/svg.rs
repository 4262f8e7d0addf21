//! Minimal self-contained SVG renderings of the heatmap, time-space and
//! lateral-offset plots.

use crate::maneuvers::{OffsetSample, TsdPoint};
use crate::safety::{HeatCell, HeatmapParams};
use std::fmt::Write as _;

/// Level 1 (most severe) to level 5.
pub const LEVEL_COLORS: [&str; 5] = ["#d7191c", "#fdae61", "#ffffbf", "#a6d96a", "#1a9641"];

const W: f64 = 800.0;
const H: f64 = 450.0;
const M: f64 = 40.0;

fn open(w: f64, h: f64) -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n")
}

pub fn heatmap_svg(cells: &[HeatCell], hp: &HeatmapParams) -> String {
    let cw = W / hp.cols as f64;
    let ch = W * hp.image_h / hp.image_w / hp.rows as f64;
    let height = ch * hp.rows as f64;
    let mut s = open(W, height + 30.0);
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{height}\" fill=\"#f0f0f0\" stroke=\"#999\"/>");
    for c in cells {
        let color = LEVEL_COLORS[(c.level.clamp(1, 5) - 1) as usize];
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"{color}\"><title>level {} mean {:.0} ms n={}</title></rect>",
            c.col as f64 * cw,
            c.row as f64 * ch,
            c.level,
            c.mean_ms,
            c.count
        );
    }
    for (k, color) in LEVEL_COLORS.iter().enumerate() {
        let x = 10.0 + 90.0 * k as f64;
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"{:.2}\" width=\"16\" height=\"16\" fill=\"{color}\"/>", height + 7.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\">level {}</text>", x + 20.0, height + 20.0, k + 1);
    }
    s.push_str("</svg>\n");
    s
}

fn polyline_svg(series: &[Vec<(f64, f64)>], x_label: &str, y_label: &str, invert_y: bool) -> String {
    let pts: Vec<(f64, f64)> = series.iter().flatten().copied().collect();
    let mut s = open(W, H);
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let sx = (W - 2.0 * M) / (x1 - x0).max(1e-9);
    let sy = (H - 2.0 * M) / (y1 - y0).max(1e-9);
    let map = |(x, y): (f64, f64)| {
        let py = if invert_y { M + (y - y0) * sy } else { H - M - (y - y0) * sy };
        (M + (x - x0) * sx, py)
    };
    let _ = writeln!(s, "<rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>", W - 2.0 * M, H - 2.0 * M);
    for line in series {
        let mut d = String::new();
        for &p in line {
            let (x, y) = map(p);
            let _ = write!(d, "{x:.1},{y:.1} ");
        }
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#2b83ba\" stroke-width=\"1\"/>", d.trim_end());
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label} [{x0:.1}, {x1:.1}]</text>", W / 2.0, H - 10.0);
    let _ = writeln!(s, "<text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">{y_label} [{y0:.1}, {y1:.1}]</text>", H / 2.0, H / 2.0);
    s.push_str("</svg>\n");
    s
}

pub fn tsd_svg(series: &[Vec<TsdPoint>]) -> String {
    let lines: Vec<Vec<(f64, f64)>> = series.iter().map(|l| l.iter().map(|p| (p.time_s, p.distance_m)).collect()).collect();
    polyline_svg(&lines, "time (s)", "distance (m)", false)
}

/// Lateral offset against time; y grows downward as in the image.
pub fn offsets_svg(series: &[Vec<OffsetSample>]) -> String {
    let lines: Vec<Vec<(f64, f64)>> = series.iter().map(|l| l.iter().map(|p| (p.time_s, p.offset_px)).collect()).collect();
    polyline_svg(&lines, "time (s)", "offset (px)", true)
}
