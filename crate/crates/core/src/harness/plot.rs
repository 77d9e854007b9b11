//! Plot-ready long-format tables and a minimal SVG line chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile;

/// `cell` holds the grouping keys as `key=value` pairs joined by `;`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub experiment: String,
    pub cell: String,
    pub statistic: String,
    pub value: f64,
}

pub const PLOT_HEADER: [&str; 4] = ["experiment", "cell", "statistic", "value"];

pub fn cell_key(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn check_row(r: &PlotRow) -> Result<()> {
    let bad = |f: &str| r.experiment.contains(f) || r.statistic.contains(f) || r.cell.contains(f);
    if r.experiment.is_empty() || r.statistic.is_empty() || bad("\n") {
        return Err(Error::Internal(format!("plot row violates the schema: {r:?}")));
    }
    Ok(())
}

/// CSV with the fixed header, one line per row.
pub fn emit_plot_data(rows: &[PlotRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PLOT_HEADER)?;
    for r in rows {
        check_row(r)?;
        w.write_record([r.experiment.as_str(), r.cell.as_str(), r.statistic.as_str(), &r.value.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn parse_plot_data(bytes: &[u8]) -> Result<Vec<PlotRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != PLOT_HEADER {
        return Err(Error::Format(format!("unexpected plot header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Median and 25/75 quantiles (type 7) of every `(experiment, cell, statistic)`
/// group, emitted as statistics `<name>_median`, `<name>_q25`, `<name>_q75`.
pub fn aggregate(rows: &[PlotRow]) -> Result<Vec<PlotRow>> {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((&r.experiment, &r.cell, &r.statistic)).or_default().push(r.value);
    }
    let mut out = Vec::with_capacity(groups.len() * 3);
    for ((e, c, s), values) in groups {
        let finite: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            continue;
        }
        for (suffix, q) in [("median", 0.5), ("q25", 0.25), ("q75", 0.75)] {
            out.push(PlotRow {
                experiment: e.into(),
                cell: c.into(),
                statistic: format!("{s}_{suffix}"),
                value: quantile(&finite, q)?,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Self-contained SVG line chart; non-finite points (and non-positive ones
/// on log axes) are dropped.
pub fn line_chart_svg(title: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!log_x || x > 0.0) && (!log_y || y > 0.0);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (tx(x), ty(y))).collect())
        .collect();
    let all = pts.iter().flatten();
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
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<polyline points="{pad},{top} {pad},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#,
        top = pad,
        bottom = h - pad,
        right = w - pad
    );
    let fmt_tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(svg, r#"<text x="{pad}" y="{}">{}</text>"#, h - pad + 15.0, fmt_tick(x0, log_x));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, w - pad, h - pad + 15.0, fmt_tick(x1, log_x));
    let _ = writeln!(svg, r#"<text x="5" y="{}">{}</text>"#, h - pad, fmt_tick(y0, log_y));
    let _ = writeln!(svg, r#"<text x="5" y="{}">{}</text>"#, pad, fmt_tick(y1, log_y));
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, coords.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            w - pad + 5.0 - 120.0,
            pad + 15.0 * (k as f64 + 1.0),
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
