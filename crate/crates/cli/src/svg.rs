//! Minimal hand-written SVG charts. Output is plain text with fixed number
//! formatting, so identical inputs give identical files.
//!
//! Every plotted element carries `data-*` attributes holding the exact values
//! it was drawn from, which lets tests tie the picture back to the CSV.

use std::fmt::Write as _;

use csigan::evaluation::{MetricName, ReportRow};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub fn escape(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => s.push_str("&amp;"),
            '<' => s.push_str("&lt;"),
            '>' => s.push_str("&gt;"),
            '"' => s.push_str("&quot;"),
            '\'' => s.push_str("&apos;"),
            c => s.push(c),
        }
    }
    s
}

fn header(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes(s: &mut String) {
    let _ = writeln!(
        s,
        "<path d=\"M{MARGIN} {MARGIN} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
}

/// One line per series over a shared x axis. Series are `(name, points)`.
pub fn line_chart(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = header(title);
    axes(&mut s);
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN}\" x2=\"{}\" y1=\"{:.2}\" y2=\"{:.2}\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>",
            WIDTH - MARGIN,
            py(0.0),
            py(0.0)
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{y1:.3}</text>", MARGIN - 4.0, py(y1) + 4.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{y0:.3}</text>", MARGIN - 4.0, py(y0) + 4.0);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\" text-anchor=\"middle\">{x0}</text>", HEIGHT - MARGIN + 16.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x1}</text>", WIDTH - MARGIN, HEIGHT - MARGIN + 16.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", WIDTH / 2.0, HEIGHT - 12.0, escape(x_label));
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut coords = String::new();
        for (j, &(x, y)) in points.iter().enumerate() {
            if j > 0 {
                coords.push(' ');
            }
            let _ = write!(coords, "{:.2},{:.2}", px(x), py(y));
        }
        let _ = writeln!(
            s,
            "<polyline data-series=\"{}\" data-count=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{coords}\"/>",
            escape(name),
            points.len()
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{:.2}\" width=\"12\" height=\"3\" fill=\"{color}\"/><text x=\"{}\" y=\"{:.2}\">{}</text>",
            WIDTH - MARGIN - 120.0,
            ly - 4.0,
            WIDTH - MARGIN - 104.0,
            ly,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: one group per report row, one bar per present metric, on a
/// 0 to 100 % axis.
pub fn metric_bars(title: &str, rows: &[ReportRow]) -> String {
    let mut s = header(title);
    axes(&mut s);
    let plot_h = HEIGHT - 2.0 * MARGIN;
    for pct in [0, 25, 50, 75, 100] {
        let y = HEIGHT - MARGIN - plot_h * pct as f64 / 100.0;
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN}\" x2=\"{}\" y1=\"{y:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{pct}%</text>",
            WIDTH - MARGIN,
            MARGIN - 4.0,
            y + 4.0
        );
    }
    let group_w = (WIDTH - 2.0 * MARGIN) / rows.len().max(1) as f64;
    let bar_w = group_w * 0.8 / MetricName::ALL.len() as f64;
    for (g, row) in rows.iter().enumerate() {
        let gx = MARGIN + g as f64 * group_w + group_w * 0.1;
        for (b, m) in MetricName::ALL.into_iter().enumerate() {
            let Some(v) = row.get(m) else { continue };
            let h = plot_h * v;
            let _ = writeln!(
                s,
                "<rect data-user=\"{}\" data-metric=\"{}\" data-value=\"{v}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                escape(&row.user),
                m.key(),
                gx + b as f64 * bar_w,
                HEIGHT - MARGIN - h,
                bar_w * 0.9,
                COLORS[b]
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            gx + group_w * 0.4,
            HEIGHT - MARGIN + 16.0,
            escape(&row.user)
        );
    }
    for (b, m) in MetricName::ALL.into_iter().enumerate() {
        let x = MARGIN + 8.0 + 130.0 * b as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            HEIGHT - 22.0,
            COLORS[b],
            x + 14.0,
            HEIGHT - 13.0,
            escape(m.title())
        );
    }
    s.push_str("</svg>\n");
    s
}
