//! Standalone SVG charts: mean metric trajectory per method on a log axis,
//! and per-method box summaries of the transient area.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use formation_core::experiment::Summary;

use crate::error::CliError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Non-diverged AUC values keyed by method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryData {
    pub auc: BTreeMap<String, Vec<f64>>,
}

fn required(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Csv(format!("{}: missing column `{name}`", path.display())))
}

fn parse_num(value: &str, column: &str, row: usize, path: &Path) -> Result<f64, CliError> {
    value.parse::<f64>().map_err(|_| {
        CliError::Csv(format!(
            "{} row {row}: column `{column}` has non-numeric value `{value}`",
            path.display()
        ))
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

/// Reads a summary CSV. Row numbers in errors count the header as row 1.
pub fn read_summary(path: &Path) -> Result<SummaryData, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?
        .clone();
    let method = required(&headers, "method", path)?;
    let auc = required(&headers, "AUC", path)?;
    let diverged = required(&headers, "diverged", path)?;
    let mut data = SummaryData::default();
    let mut rows = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| CliError::Csv(format!("{} row {row}: {e}", path.display())))?;
        rows += 1;
        let div = match &rec[diverged] {
            "true" => true,
            "false" => false,
            other => {
                return Err(CliError::Csv(format!(
                    "{} row {row}: column `diverged` must be true or false, got `{other}`",
                    path.display()
                )))
            }
        };
        let values = data.auc.entry(rec[method].to_string()).or_default();
        if !div {
            values.push(parse_num(&rec[auc], "AUC", row, path)?);
        }
    }
    if rows == 0 {
        return Err(CliError::Csv(format!("{}: no data rows", path.display())));
    }
    Ok(data)
}

/// Per-method mean of `V` at every step present in the trajectory CSV.
pub fn read_mean_trajectories(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?
        .clone();
    let method = required(&headers, "method", path)?;
    let k_col = required(&headers, "k", path)?;
    let v_col = required(&headers, "V", path)?;
    let mut sums: BTreeMap<String, Vec<(f64, usize)>> = BTreeMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| CliError::Csv(format!("{} row {row}: {e}", path.display())))?;
        let k: usize = rec[k_col].parse().map_err(|_| {
            CliError::Csv(format!("{} row {row}: column `k` must be a step index", path.display()))
        })?;
        let v = parse_num(&rec[v_col], "V", row, path)?;
        let series = sums.entry(rec[method].to_string()).or_default();
        if series.len() <= k {
            series.resize(k + 1, (0.0, 0));
        }
        series[k].0 += v;
        series[k].1 += 1;
    }
    if sums.is_empty() {
        return Err(CliError::Csv(format!("{}: no data rows", path.display())));
    }
    Ok(sums
        .into_iter()
        .map(|(m, s)| {
            let mean = s
                .into_iter()
                .map(|(sum, n)| if n == 0 { f64::NAN } else { sum / n as f64 })
                .collect();
            (m, mean)
        })
        .collect())
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn plot_area() -> (f64, f64, f64, f64) {
    (MARGIN_L, MARGIN_T, WIDTH - MARGIN_R, HEIGHT - MARGIN_B)
}

/// Mean `V` against step, log-scaled, one polyline per method.
pub fn line_chart(series: &BTreeMap<String, Vec<f64>>) -> String {
    let (x0, y0, x1, y1) = plot_area();
    let positive = series.values().flatten().copied().filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1e-12, 1.0) };
    let dec_lo = lo.log10().floor();
    let dec_hi = hi.log10().ceil().max(dec_lo + 1.0);
    let steps = series.values().map(Vec::len).max().unwrap_or(1).max(2) - 1;
    let sx = |k: usize| x0 + (x1 - x0) * k as f64 / steps as f64;
    let sy = |v: f64| {
        let l = v.max(lo).log10();
        y1 - (y1 - y0) * (l - dec_lo) / (dec_hi - dec_lo)
    };

    let mut s = svg_open("Mean V[k] per method");
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    let decades = (dec_hi - dec_lo) as i64;
    let stride = (decades / 8).max(1);
    for d in (0..=decades).step_by(stride as usize) {
        let e = dec_lo + d as f64;
        let y = y1 - (y1 - y0) * d as f64 / decades as f64;
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#, x0 - 6.0, y + 4.0, e as i64);
    }
    for t in 0..=4 {
        let k = steps * t / 4;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{k}</text>"#, sx(k), y1 + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">k</text>"#, (x0 + x1) / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">V (log scale)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (idx, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, v)| format!("{:.2},{:.2}", sx(k), sy(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            points.join(" ")
        );
        let ly = y0 + 16.0 + 18.0 * idx as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, x1 + 12.0, x1 + 36.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x1 + 42.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Median, interquartile box and min–max whiskers of AUC per method.
pub fn box_chart(values: &BTreeMap<String, Vec<f64>>) -> String {
    let (x0, y0, x1, y1) = plot_area();
    let summaries: Vec<(&String, Option<Summary>)> =
        values.iter().map(|(m, v)| (m, Summary::from_values(v))).collect();
    let (lo, hi) = summaries
        .iter()
        .filter_map(|(_, s)| s.as_ref())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.min), b.max(s.max)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi) } else { (0.0, 1.0) };
    let hi = if hi > lo { hi * 1.05 } else { lo + 1.0 };
    let sy = |v: f64| y1 - (y1 - y0) * (v - lo) / (hi - lo);
    let slot = (x1 - x0) / summaries.len().max(1) as f64;

    let mut s = svg_open("AUC over k = 0..100 per method");
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for t in 0..=5 {
        let v = lo + (hi - lo) * t as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.3}</text>"#, x0 - 6.0, y + 4.0, v);
    }
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">AUC</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (idx, (name, summary)) in summaries.iter().enumerate() {
        let cx = x0 + slot * (idx as f64 + 0.5);
        let half = (slot * 0.25).min(40.0);
        let color = PALETTE[idx % PALETTE.len()];
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, escape(name));
        let Some(sm) = summary else { continue };
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            sy(sm.min),
            sy(sm.max)
        );
        for v in [sm.min, sm.max] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                sy(v),
                cx + half / 2.0,
                sy(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6" stroke="black"/>"#,
            cx - half,
            sy(sm.q3),
            2.0 * half,
            (sy(sm.q1) - sy(sm.q3)).max(0.0)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2.5"/>"#,
            cx - half,
            sy(sm.median),
            cx + half,
            sy(sm.median)
        );
    }
    s.push_str("</svg>\n");
    s
}
