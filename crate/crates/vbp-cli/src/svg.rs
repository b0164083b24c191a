//! Minimal static SVG line charts, written without a plotting dependency.
//!
//! Output is deterministic: the same series always serialize to the same
//! bytes. Every chart is paired with a CSV elsewhere, so these files are
//! for eyes only.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

pub const COLORS: [&str; 6] = ["#1f6feb", "#d1242f", "#1a7f37", "#9a6700", "#8250df", "#57606a"];

/// Render one or more equal-x-spacing series as polylines with axes and a
/// legend. `y_range` fixes the vertical scale; pass `None` to fit data.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    y_range: Option<(f64, f64)>,
) -> String {
    const W: f64 = 900.0;
    const H: f64 = 300.0;
    const ML: f64 = 60.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 30.0;
    const MB: f64 = 45.0;

    let max_len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let (mut y_min, mut y_max) = y_range.unwrap_or_else(|| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in series {
            for &v in s.values {
                if v.is_finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        if !lo.is_finite() {
            (0.0, 1.0)
        } else {
            (lo, hi)
        }
    });
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }

    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;
    let x_of = |i: usize| ML + plot_w * i as f64 / (max_len.max(2) - 1) as f64;
    let y_of = |v: f64| MT + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        out,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"#24292f\" stroke-width=\"1\"/>",
        MT + plot_h
    );
    let _ = writeln!(
        out,
        "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#24292f\" stroke-width=\"1\"/>",
        MT + plot_h,
        ML + plot_w,
        MT + plot_h
    );
    // axis labels and extremes
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
        ML + plot_w / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        MT + plot_h / 2.0,
        MT + plot_h / 2.0,
        escape(y_label)
    );
    for (v, anchor_y) in [(y_max, MT + 4.0), (y_min, MT + plot_h)] {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{:.4}</text>",
            ML - 5.0,
            anchor_y,
            v
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
        ML + plot_w,
        MT + plot_h + 14.0,
        max_len.saturating_sub(1)
    );

    for s in series {
        if s.values.is_empty() {
            continue;
        }
        let mut points = String::new();
        for (i, &v) in s.values.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let _ = write!(points, "{:.2},{:.2} ", x_of(i), y_of(v.clamp(y_min, y_max)));
        }
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>",
            s.color,
            points.trim_end()
        );
    }
    // legend
    for (k, s) in series.iter().enumerate() {
        let y = MT + 14.0 * k as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"2\"/>",
            ML + plot_w - 130.0,
            y,
            ML + plot_w - 110.0,
            y,
            s.color
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            ML + plot_w - 105.0,
            y + 3.5,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Cheap structural check used by tests: tags balance and the document has
/// a single svg root.
pub fn is_well_formed(svg: &str) -> bool {
    let mut depth = 0i32;
    let mut i = 0;
    let bytes = svg.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let Some(end) = svg[i..].find('>') else {
                return false;
            };
            let tag = &svg[i + 1..i + end];
            if tag.starts_with('/') {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            } else if !tag.ends_with('/') && !tag.starts_with('?') && !tag.starts_with('!') {
                depth += 1;
            }
            i += end + 1;
        } else {
            i += 1;
        }
    }
    depth == 0
}
