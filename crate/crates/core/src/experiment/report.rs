use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::io::write_atomic;
use super::{RunRecord, SeriesRecord};
use crate::error::{Error, Result};
use crate::estimates::ConvergenceReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format {other:?}; use csv, json or svg"))),
        }
    }
}

/// Column order of the per-stage table.
pub const STAGE_COLUMNS: [&str; 21] = [
    "sigma",
    "entropy",
    "mass_residual",
    "sqrt_m_err_sq",
    "u_h1_err",
    "log_integral",
    "mass",
    "kinetic",
    "penalty",
    "penalty_weighted",
    "sigma_terms_1",
    "hessian",
    "fisher",
    "penalty_gradient",
    "sigma_terms_2",
    "sqrt_m_h1",
    "u_h1",
    "entropy_bound_ok",
    "converged",
    "iterations",
    "final_residual",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// One row per σ-stage; estimate columns are blank for unconverged stages.
pub fn stage_table(series: &SeriesRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STAGE_COLUMNS).map_err(csv_err)?;
    for st in &series.stages {
        let est = st.estimates.as_ref();
        let named = |name: &str| est.and_then(|e| e.functionals().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v));
        let mut row = vec![
            st.sigma.to_string(),
            opt(est.map(|e| e.first.entropy)),
            st.mass_residual.to_string(),
            opt(st.sqrt_m_err_sq),
            opt(st.u_h1_err),
        ];
        for col in &STAGE_COLUMNS[5..17] {
            row.push(opt(named(col)));
        }
        row.push(if st.entropy.is_empty() { String::new() } else { st.entropy.iter().all(|e| e.passes).to_string() });
        row.push(st.solver.converged.to_string());
        row.push(st.solver.iterations.to_string());
        row.push(st.solver.final_residual.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

fn verdict_table(record: &RunRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["criterion", "outcome", "detail"]).map_err(csv_err)?;
    for v in &record.verdicts {
        let outcome = serde_json::to_value(v.outcome).map_err(|e| Error::Format(e.to_string()))?;
        w.write_record([v.criterion.as_str(), outcome.as_str().unwrap_or(""), v.detail.as_str()]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

fn series_file(name: &str) -> String {
    if name == "main" {
        "stages.csv".into()
    } else {
        let safe: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        format!("stages_{safe}.csv")
    }
}

/// Log-log plot of the density errors with the fitted line.
pub fn convergence_svg(conv: &ConvergenceReport) -> Option<String> {
    let fit = conv.fit?;
    let xs: Vec<f64> = conv.sigmas.iter().map(|s| s.log10()).collect();
    let ys: Vec<f64> = conv.density_errors.iter().map(|e| e.log10()).collect();
    let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    // the fit is in natural logs; convert both ends to log10
    let line = |x: f64| (fit.intercept + fit.slope * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="steelblue" stroke-dasharray="4 3"/>"#,
        sx(x0),
        sy(line(x0)),
        sx(x1),
        sy(line(x1))
    );
    for (x, y) in xs.iter().zip(&ys) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="crimson"/>"#, sx(*x), sy(*y));
    }
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="30" font-family="sans-serif" font-size="14">log10 error vs log10 sigma, slope {:.3}</text>"#,
        fit.slope
    );
    s.push_str("</svg>\n");
    Some(s)
}

/// Writes the requested formats into `dir` and returns the written paths.
pub fn emit_report(record: &RunRecord, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    if record.is_empty() {
        return Err(Error::Validation("run record is empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let svg = record.convergence.as_ref().and_then(convergence_svg);
    if formats.contains(&ReportFormat::Csv) {
        let mut all: Vec<&SeriesRecord> = record.series.iter().collect();
        if let Some(u) = &record.uniqueness {
            all.extend(&u.paths);
        }
        for s in all {
            let p = dir.join(series_file(&s.name));
            write_atomic(&p, &stage_table(s)?)?;
            written.push(p);
        }
        let p = dir.join("verdicts.csv");
        write_atomic(&p, &verdict_table(record)?)?;
        written.push(p);
    }
    if formats.contains(&ReportFormat::Json) {
        let mut value = serde_json::to_value(record).map_err(|e| Error::Format(e.to_string()))?;
        let plot = match (&svg, formats.contains(&ReportFormat::Svg)) {
            (Some(_), true) => "convergence.svg".to_string(),
            (Some(_), false) => "not requested".to_string(),
            (None, _) => "omitted: record has no rate fit".to_string(),
        };
        value["plot"] = serde_json::Value::String(plot);
        let p = dir.join("record.json");
        let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
    }
    if formats.contains(&ReportFormat::Svg) {
        if let Some(svg) = svg {
            let p = dir.join("convergence.svg");
            write_atomic(&p, svg.as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}
