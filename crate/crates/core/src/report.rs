//! Plain-text tables and small self-contained SVG charts for campaign
//! reports. No drawing dependencies; output is deterministic.

/// Renders an aligned text table with a header rule.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let mut out = String::new();
    let mut push_row = |cells: Vec<String>, out: &mut String| {
        let line: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths.get(i).copied().unwrap_or(0)))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    push_row(headers.iter().map(|h| h.to_string()).collect(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("  "));
    out.push('\n');
    for row in rows {
        push_row(row.clone(), &mut out);
    }
    out
}

const CHART_WIDTH: usize = 640;
const CHART_HEIGHT: usize = 360;
const MARGIN: usize = 48;

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" ",
            "font-size=\"16\">{title}</text>\n"
        ),
        w = CHART_WIDTH,
        h = CHART_HEIGHT,
        cx = CHART_WIDTH / 2,
        title = escape(title),
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bar chart over `[0, max(values.max, 1.0)]`.
pub fn svg_bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut svg = svg_header(title);
    let n = labels.len().max(1);
    let plot_w = CHART_WIDTH - 2 * MARGIN;
    let plot_h = CHART_HEIGHT - 2 * MARGIN;
    let peak = values.iter().cloned().fold(1.0f64, f64::max);
    let band = plot_w / n;
    let bar_w = (band as f64 * 0.6) as usize;
    for (i, (label, &value)) in labels.iter().zip(values).enumerate() {
        let h = ((value / peak) * plot_h as f64).round().max(0.0) as usize;
        let x = MARGIN + i * band + (band - bar_w) / 2;
        let y = CHART_HEIGHT - MARGIN - h;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"#4477aa\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{tx}\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{v:.3}</text>\n",
            tx = x + bar_w / 2,
            ty = y.saturating_sub(4),
            v = value,
        ));
        svg.push_str(&format!(
            "<text x=\"{tx}\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
            tx = x + bar_w / 2,
            ty = CHART_HEIGHT - MARGIN + 16,
            label = escape(label),
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = CHART_HEIGHT - MARGIN,
        r = CHART_WIDTH - MARGIN,
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Line chart of (x, y) points in input order.
pub fn svg_line_chart(title: &str, points: &[(f64, f64)]) -> String {
    let mut svg = svg_header(title);
    if !points.is_empty() {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if (x_max - x_min).abs() < 1e-12 {
            x_max = x_min + 1.0;
        }
        if (y_max - y_min).abs() < 1e-12 {
            y_max = y_min + 1.0;
        }
        let plot_w = (CHART_WIDTH - 2 * MARGIN) as f64;
        let plot_h = (CHART_HEIGHT - 2 * MARGIN) as f64;
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| {
                let px = MARGIN as f64 + (x - x_min) / (x_max - x_min) * plot_w;
                let py = (CHART_HEIGHT - MARGIN) as f64 - (y - y_min) / (y_max - y_min) * plot_h;
                format!("{px:.1},{py:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#cc6677\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{m}\" y=\"{b}\" font-family=\"sans-serif\" font-size=\"11\">[{y0:.3}, {y1:.3}]</text>\n",
            m = 4,
            b = CHART_HEIGHT / 2,
            y0 = y_min,
            y1 = y_max,
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = CHART_HEIGHT - MARGIN,
        r = CHART_WIDTH - MARGIN,
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment_and_rule() {
        let table = render_table(
            &["model", "sr"],
            &[
                vec!["recurrent".into(), "0.61".into()],
                vec!["cnn".into(), "0.55".into()],
            ],
        );
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("model"));
        assert!(lines[1].starts_with("-----"));
    }

    #[test]
    fn bar_chart_contains_bars_and_labels() {
        let svg = svg_bar_chart(
            "success rate",
            &["a".into(), "b".into()],
            &[0.5, 0.75],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.matches("<rect").count() >= 3); // background + 2 bars
        assert!(svg.contains("0.750"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn line_chart_handles_degenerate_input() {
        let svg = svg_line_chart("reward", &[]);
        assert!(svg.contains("</svg>"));
        let svg = svg_line_chart("reward", &[(0.0, 1.0)]);
        assert!(svg.contains("polyline"));
    }
}
