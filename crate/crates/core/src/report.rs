//! Report files and their text rendering.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ShapleyReport;

pub const BAR_WIDTH: usize = 40;

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn report_from_json(text: &str) -> Result<ShapleyReport> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_report(path: &Path) -> Result<ShapleyReport> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath {
            what: "report",
            path: path.to_path_buf(),
        },
        _ => Error::Io(e),
    })?;
    report_from_json(&text)
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so a failed write never leaves a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(d) => d,
        None => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

/// Flat `tool,phi,share` export.
pub fn to_csv(report: &ShapleyReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["tool", "phi", "share"])
        .map_err(|e| Error::Io(e.into()))?;
    for ((tool, phi), share) in report.tools.iter().zip(&report.phi).zip(&report.shares) {
        w.write_record([tool.as_str(), &phi.to_string(), &share.to_string()])
            .map_err(|e| Error::Io(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Tool indices ordered by descending phi, ties by catalog order.
pub fn ranking(phi: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..phi.len()).collect();
    idx.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
    idx
}

/// One line per tool, highest phi first: name, phi, share and a bar scaled
/// so that the largest positive phi spans the full width.
pub fn render_bar_chart(report: &ShapleyReport) -> String {
    let max = report.phi.iter().copied().fold(0.0f64, f64::max);
    let name_width = report.tools.iter().map(|t| t.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for i in ranking(&report.phi) {
        let phi = report.phi[i];
        let share = report.shares.get(i).copied().unwrap_or(0.0);
        let bar = bar_len(phi, max);
        out.push_str(&format!(
            "{:<name_width$}  {:>7.3}  {:>6.1}%  {}\n",
            report.tools[i],
            phi,
            share * 100.0,
            "█".repeat(bar),
        ));
    }
    out
}

fn bar_len(phi: f64, max: f64) -> usize {
    if max <= 0.0 || phi <= 0.0 {
        return 0;
    }
    ((phi / max * BAR_WIDTH as f64).floor() as usize).min(BAR_WIDTH)
}

/// Serialized name of a unit enum.
fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

/// Header with provenance followed by the bar chart.
pub fn render_summary(report: &ShapleyReport) -> String {
    let c = &report.config;
    let mut out = format!(
        "prompt: {}\nestimator: {}  rho: {}  seed: {}  backend: {}  evaluations: {}\n",
        c.prompt,
        tag(&c.estimator),
        c.sampling_ratio,
        c.seed,
        tag(&c.backend),
        report.evaluation_count
    );
    if let Some(top) = &report.top_tool {
        out.push_str(&format!("top tool: {top}\n"));
    }
    out.push('\n');
    out.push_str(&render_bar_chart(report));
    out
}
