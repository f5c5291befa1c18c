//! Files written after an experiment: long-format rows, slope fits and SVG
//! line charts. Output is a pure function of the [`ExperimentResult`].

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::{ExperimentResult, TAG_CONV, TAG_TWO_STEP};
use crate::model::fmt17;

pub const ROWS_FILE: &str = "rows.csv";
pub const SLOPES_FILE: &str = "slopes.csv";
pub const ERROR_CHART: &str = "error_vs_n.svg";
pub const TAU_COUNT_CHART: &str = "n_tau_vs_n.svg";
pub const TAU_TILDE_COUNT_CHART: &str = "n_tau_tilde_vs_n.svg";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rows_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("n,replicate,estimator,error,n_tau,n_tau_tilde,failed\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.replicate,
            r.estimator,
            r.error.map(fmt17).unwrap_or_default(),
            opt(r.n_tau),
            opt(r.n_tau_tilde),
            u8::from(r.failure.is_some()),
        );
    }
    out
}

pub fn slopes_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("estimator,slope,intercept,r2,n_points\n");
    for f in &result.slope_fits {
        match f.fit {
            Some(fit) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    f.estimator,
                    fmt17(fit.slope),
                    fmt17(fit.intercept),
                    fmt17(fit.r2),
                    f.n_points
                );
            }
            None => {
                let _ = writeln!(out, "{},,,,{}", f.estimator, f.n_points);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesStyle {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: SeriesStyle,
}

/// A fixed 800x600 SVG 1.1 chart with linear axes over the given data.
#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

impl Chart {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let pad_x = ((x1 - x0) * 0.05).max(0.05);
        let pad_y = ((y1 - y0) * 0.05).max(0.05);
        let (x0, x1, y0, y1) = (x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y);
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="30" font-size="18" text-anchor="middle">{}</text>"#,
            num(MARGIN_LEFT + plot_w / 2.0),
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            num(MARGIN_LEFT),
            num(MARGIN_TOP),
            num(plot_w),
            num(plot_h)
        );
        for t in nice_ticks(x0, x1, 8) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#dddddd"/><text x="{0}" y="{3}" font-size="12" text-anchor="middle">{4}</text>"##,
                num(x),
                num(MARGIN_TOP),
                num(MARGIN_TOP + plot_h),
                num(MARGIN_TOP + plot_h + 18.0),
                tick_label(t)
            );
        }
        for t in nice_ticks(y0, y1, 8) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#dddddd"/><text x="{3}" y="{4}" font-size="12" text-anchor="end">{5}</text>"##,
                num(MARGIN_LEFT),
                num(y),
                num(MARGIN_LEFT + plot_w),
                num(MARGIN_LEFT - 6.0),
                num(y + 4.0),
                tick_label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
            num(MARGIN_LEFT + plot_w / 2.0),
            num(HEIGHT - 15.0),
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="20" y="{0}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
            num(MARGIN_TOP + plot_h / 2.0),
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            match s.style {
                SeriesStyle::Line => {
                    let path: Vec<String> =
                        s.points.iter().map(|&(x, y)| format!("{},{}", num(sx(x)), num(sy(y)))).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                        path.join(" ")
                    );
                    for &(x, y) in &s.points {
                        let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="3.5" fill="{color}"/>"#, num(sx(x)), num(sy(y)));
                    }
                }
                SeriesStyle::Points => {
                    for &(x, y) in &s.points {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}" fill-opacity="0.45"/>"#,
                            num(sx(x)),
                            num(sy(y))
                        );
                    }
                }
            }
            let ly = MARGIN_TOP + 20.0 + 22.0 * k as f64;
            let lx = WIDTH - MARGIN_RIGHT + 15.0;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="14" height="14" fill="{color}"/><text x="{}" y="{}" font-size="13">{}</text>"#,
                num(lx),
                num(ly - 11.0),
                num(lx + 20.0),
                num(ly),
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn estimator_label(tag: &str) -> String {
    match tag {
        TAG_CONV => "conventional".to_string(),
        TAG_TWO_STEP => "two-step".to_string(),
        other => other.to_string(),
    }
}

fn estimators_in(result: &ExperimentResult) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    for r in &result.rows {
        if !tags.contains(&r.estimator) {
            tags.push(r.estimator.clone());
        }
    }
    tags
}

/// ln(aggregated error) against ln n, one line per estimator.
pub fn error_chart(result: &ExperimentResult) -> Chart {
    let series = estimators_in(result)
        .iter()
        .map(|tag| {
            let points = result
                .aggregates
                .iter()
                .filter(|a| &a.estimator == tag && a.value > 0.0)
                .map(|a| ((a.n as f64).ln(), a.value.ln()))
                .collect();
            let slope = result.slope(tag).map(|s| format!(" ({s:.3})")).unwrap_or_default();
            Series { name: format!("{}{slope}", estimator_label(tag)), points, style: SeriesStyle::Line }
        })
        .collect();
    Chart {
        title: "Estimation error versus sample size".into(),
        x_label: "ln n".into(),
        y_label: "ln W_p error".into(),
        series,
    }
}

/// ln n_tau against ln n for every replicate with at least one exceedance.
pub fn tau_count_chart(result: &ExperimentResult) -> Option<Chart> {
    let series: Vec<Series> = estimators_in(result)
        .iter()
        .filter_map(|tag| {
            let points: Vec<(f64, f64)> = result
                .rows
                .iter()
                .filter(|r| &r.estimator == tag)
                .filter_map(|r| r.n_tau.filter(|&c| c > 0).map(|c| ((r.n as f64).ln(), (c as f64).ln())))
                .collect();
            (!points.is_empty()).then(|| Series { name: estimator_label(tag), points, style: SeriesStyle::Points })
        })
        .collect();
    (!series.is_empty()).then(|| Chart {
        title: "Samples exceeding the threshold".into(),
        x_label: "ln n".into(),
        y_label: "ln n_tau".into(),
        series,
    })
}

/// n_tau_tilde against ln n (direction threshold of the two-step estimator).
pub fn tau_tilde_count_chart(result: &ExperimentResult) -> Option<Chart> {
    let points: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter_map(|r| r.n_tau_tilde.map(|c| ((r.n as f64).ln(), c as f64)))
        .collect();
    (!points.is_empty()).then(|| Chart {
        title: "Samples exceeding the direction threshold".into(),
        x_label: "ln n".into(),
        y_label: "n_tau_tilde".into(),
        series: vec![Series { name: estimator_label(TAG_TWO_STEP), points, style: SeriesStyle::Points }],
    })
}

/// Writes `rows.csv`, `slopes.csv` and, when there is data, the SVG charts.
pub fn emit_outputs(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(ROWS_FILE), rows_csv(result))?;
    std::fs::write(out_dir.join(SLOPES_FILE), slopes_csv(result))?;
    if result.rows.is_empty() {
        return Ok(());
    }
    if !result.aggregates.is_empty() {
        std::fs::write(out_dir.join(ERROR_CHART), error_chart(result).render())?;
    }
    if let Some(c) = tau_count_chart(result) {
        std::fs::write(out_dir.join(TAU_COUNT_CHART), c.render())?;
    }
    if let Some(c) = tau_tilde_count_chart(result) {
        std::fs::write(out_dir.join(TAU_TILDE_COUNT_CHART), c.render())?;
    }
    Ok(())
}
