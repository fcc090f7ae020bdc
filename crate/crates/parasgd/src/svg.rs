//! Minimal static SVG: rectangles + text for heatmaps, polylines for curves.

use std::fmt::Write;

use parasgd_core::analysis::SweepGrid;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White-to-blue ramp over `[0, max]`.
fn shade(v: f64, max: f64) -> String {
    let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
    let mix = |hi: f64, lo: f64| (hi + (lo - hi) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(255.0, 8.0), mix(255.0, 81.0), mix(255.0, 156.0))
}

/// K on rows, τ on columns; unreached cells are grey with an "×".
pub fn heatmap(grid: &SweepGrid, title: &str) -> String {
    let cell = 64.0;
    let (left, top) = (70.0, 60.0);
    let width = left + cell * grid.taus.len() as f64 + 20.0;
    let height = top + cell * grid.ks.len() as f64 + 50.0;
    let max = grid.points.iter().filter_map(|p| p.speedup()).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"##);
    let _ = writeln!(s, r##"<text x="{left}" y="20" font-size="14">{}</text>"##, escape(title));
    let _ = writeln!(s, r##"<text x="{}" y="{}" text-anchor="middle">tau</text>"##, left + cell * grid.taus.len() as f64 / 2.0, top - 25.0);
    let _ = writeln!(s, r##"<text x="15" y="{}" text-anchor="middle">K</text>"##, top + cell * grid.ks.len() as f64 / 2.0);
    for (j, tau) in grid.taus.iter().enumerate() {
        let _ = writeln!(s, r##"<text x="{}" y="{}" text-anchor="middle">{tau}</text>"##, left + cell * (j as f64 + 0.5), top - 8.0);
    }
    for (i, k) in grid.ks.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(s, r##"<text x="{}" y="{}" text-anchor="end">{k}</text>"##, left - 8.0, y + cell / 2.0 + 4.0);
        for (j, tau) in grid.taus.iter().enumerate() {
            let x = left + cell * j as f64;
            let (fill, label) = match grid.cell(*k, *tau).and_then(|p| p.speedup()) {
                Some(v) => (shade(v, max), format!("{v:.2}")),
                None => ("#bbbbbb".to_string(), "×".to_string()),
            };
            let _ = writeln!(s, r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#ffffff"/>"##);
            let _ = writeln!(s, r##"<text x="{}" y="{}" text-anchor="middle">{label}</text>"##, x + cell / 2.0, y + cell / 2.0 + 4.0);
        }
    }
    let _ = writeln!(s, r##"<text x="{left}" y="{}">speedup = N_a / (tau M_a); × = target not reached</text>"##, height - 15.0);
    s.push_str("</svg>\n");
    s
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with linear axes, or a log₁₀ x axis when `log_x` (points with
/// x ≤ 0 are then dropped).
pub fn line_chart(series: &[Series], title: &str, x_label: &str, y_label: &str, log_x: bool) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| y.is_finite() && (!log_x || *x > 0.0))
        .map(|(x, y)| (tx(x), y))
        .collect();
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = pts.iter().fold((0.0f64, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !(x1 > x0) {
        x0 = if x0.is_finite() { x0 - 1.0 } else { 0.0 };
        x1 = x0 + 2.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    y0 = y0.min(0.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"##);
    let _ = writeln!(s, r##"<text x="{left}" y="20" font-size="14">{}</text>"##, escape(title));
    let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>"##);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let xl = if log_x { 10f64.powf(fx) } else { fx };
        let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##, px(fx), top + ph + 16.0, tick(xl));
        let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##, left - 6.0, py(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##, left + pw / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(s, r##"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"##, top + ph / 2.0, top + ph / 2.0, escape(y_label));
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| y.is_finite() && (!log_x || *x > 0.0))
            .map(|&(x, y)| format!("{:.2},{:.2}", px(tx(x)), py(y)))
            .collect();
        let _ = writeln!(s, r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##, coords.join(" "));
        let ly = top + 16.0 * i as f64 + 8.0;
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"##, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}">{}</text>"##, w - right + 35.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let t = format!("{v:.2}");
        t.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
