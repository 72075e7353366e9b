//! Static SVG line chart of cumulative regret, one polyline per replication.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::records::RunRecord;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn render_svg(records: &[RunRecord], title: &str) -> String {
    let mut series: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        series.entry(r.replication).or_default().push((r.step as f64, r.cum_regret));
    }
    let x_max = records.iter().map(|r| r.step as f64).fold(1.0, f64::max);
    let y_max = records.iter().map(|r| r.cum_regret).fold(0.0, f64::max).max(1e-12);
    let sx = |x: f64| MARGIN + x / x_max * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / y_max * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (tx, ty) = (sx(f * x_max), sy(f * y_max));
        let _ = writeln!(
            svg,
            r#"<text x="{tx:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            tick(f * x_max)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            ty + 4.0,
            tick(f * y_max)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">step</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 15 {})">cumulative regret</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (rep, points)) in series.iter().enumerate() {
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-replication="{rep}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            coords.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(records: &[RunRecord], title: &str, path: &std::path::Path) -> std::io::Result<()> {
    std::fs::write(path, render_svg(records, title))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::SCHEMA_VERSION;

    #[test]
    fn one_polyline_per_replication() {
        let records: Vec<RunRecord> = (0..3)
            .flat_map(|rep| {
                (1..=10).map(move |step| RunRecord {
                    schema_version: SCHEMA_VERSION,
                    replication: rep,
                    step,
                    inst_regret: 0.1,
                    cum_regret: 0.1 * step as f64 * (rep + 1) as f64,
                    switch_count: 0,
                    rho_spent: 0.0,
                    good_event: 3,
                })
            })
            .collect();
        let svg = render_svg(&records, "regret <test>");
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains(r#"viewBox="0 0 800 500""#));
        assert!(svg.contains("regret &lt;test&gt;"));
    }

    #[test]
    fn empty_chart_is_valid() {
        let svg = render_svg(&[], "empty");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 0);
    }
}
