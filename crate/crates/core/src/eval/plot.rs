//! Minimal SVG rendering for precision-recall curves and score bars.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, escape(title));
    s
}

/// Unit-square axes with ticks at 0, 0.5 and 1.
fn axes(s: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN, MARGIN);
    let _ = writeln!(s, "<path d=\"M{x0},{y1} L{x0},{y0} L{x1},{y0}\" fill=\"none\" stroke=\"black\"/>");
    for t in [0.0, 0.5, 1.0] {
        let x = x0 + t * (x1 - x0);
        let y = y0 - t * (y0 - y1);
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{t}</text>", y0 + 16.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t}</text>", x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn to_px(x: f64, y: f64) -> (f64, f64) {
    (MARGIN + x * (W - 2.0 * MARGIN), H - MARGIN - y * (H - 2.0 * MARGIN))
}

/// Step plots of `(recall, precision)` points, one per named curve.
pub fn pr_curve_svg(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = open(title);
    axes(&mut s, "recall", "precision");
    for (c, (name, points)) in curves.iter().enumerate() {
        let color = COLORS[c % COLORS.len()];
        let mut d = String::new();
        let mut prev_r = 0.0;
        for (k, &(r, p)) in points.iter().enumerate() {
            let (xa, y) = to_px(prev_r, p);
            let (xb, _) = to_px(r, p);
            let _ = write!(d, "{}{xa:.1},{y:.1} L{xb:.1},{y:.1} ", if k == 0 { "M" } else { "L" });
            prev_r = r;
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>", d.trim_end());
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            W - MARGIN - 120.0,
            MARGIN + 16.0 * (c as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars for values in `[0, 1]`.
pub fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut s = open(title);
    axes(&mut s, "", y_label);
    let n = bars.len().max(1) as f64;
    let slot = (W - 2.0 * MARGIN) / n;
    for (i, (name, v)) in bars.iter().enumerate() {
        let v = v.clamp(0.0, 1.0);
        let (_, top) = to_px(0.0, v);
        let x = MARGIN + slot * (i as f64 + 0.15);
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
            slot * 0.7,
            H - MARGIN - top,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.3}</text>", x + slot * 0.35, top - 4.0);
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            x + slot * 0.35,
            H - MARGIN + 30.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svgs_are_well_formed_enough() {
        let pr = pr_curve_svg("seal", &[("run <1>".into(), vec![(0.5, 1.0), (1.0, 0.66)])]);
        assert!(pr.starts_with("<svg") && pr.ends_with("</svg>\n"));
        assert!(pr.contains("run &lt;1&gt;"));
        let bars = bar_chart_svg("ablation", "macro F1", &[("none".into(), 0.9), ("dilation".into(), 0.8)]);
        assert_eq!(bars.matches("<rect").count(), 3);
    }
}
