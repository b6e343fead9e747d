//! Minimal native SVG line plots.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Polyline plot with axes; `log_x` plots `log10(x)`.
pub fn line_plot(title: &str, x_label: &str, log_x: bool, series: &[Series]) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let all = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1.is_finite() && (!log_x || p.0 > 0.0));
    let (x0, x1) = span(all().map(|p| tx(p.0)));
    let (y0, y1) = span(all().map(|p| p.1));
    let px = |x: f64| M + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(s, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M);
    let _ = writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M);
    let xl = if log_x { format!("log10({x_label})") } else { x_label.to_string() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xl}</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(s, r#"<text x="{M}" y="{}" text-anchor="end">{x0:.3}</text>"#, H - M + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x1:.3}</text>"#, W - M, H - M + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y0:.3e}</text>"#, M - 4.0, H - M);
    let _ = writeln!(s, r#"<text x="{}" y="{M}" text-anchor="end">{y1:.3e}</text>"#, M - 4.0);
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite() && (!log_x || p.0 > 0.0))
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let _ =
            writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, W - M + 5.0, M + 15.0 * k as f64, ser.label);
    }
    s.push_str("</svg>\n");
    s
}
