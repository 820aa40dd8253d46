//! CSV and JSON output of sweep rows.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::sweep::SweepRow;
use crate::error::{Error, Result};

/// CSV columns in order.
pub const CSV_HEADER: [&str; 13] = [
    "sweep_var",
    "sweep_value",
    "seed",
    "strategy",
    "status",
    "objective_bps",
    "aggregate_bps",
    "min_user_bps",
    "per_user_bps",
    "spectral_eff_bps_per_hz",
    "penalty_residual",
    "converged",
    "wall_ms",
];

/// Shortest round-trip decimal; empty for NaN.
fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Rows as UTF-8 CSV with LF line endings. Per-user throughputs share one
/// column, separated by `;`.
pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        let per_user = r.per_user_bps.iter().map(|&v| num(v)).collect::<Vec<_>>().join(";");
        w.write_record([
            r.sweep_var.clone(),
            num(r.sweep_value),
            r.seed.to_string(),
            r.strategy.label().to_string(),
            r.status.label().to_string(),
            num(r.objective_bps),
            num(r.aggregate_bps),
            num(r.min_user_bps),
            per_user,
            num(r.spectral_eff_bps_per_hz),
            num(r.penalty_residual),
            r.converged.to_string(),
            r.wall_ms.map(num).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// One JSON object per row with the full report (or error message).
pub fn runs_json(rows: &[SweepRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| {
                json!({
                    "sweep_var": r.sweep_var,
                    "sweep_value": if r.sweep_value.is_nan() { Value::Null } else { json!(r.sweep_value) },
                    "seed": r.seed,
                    "strategy": r.strategy.label(),
                    "status": r.status.label(),
                    "report": r.detail,
                })
            })
            .collect(),
    )
}

/// Writes `results.csv` and `runs.json` into `dir`, creating it if needed.
pub fn write_outputs(rows: &[SweepRow], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    let json_path = dir.join("runs.json");
    std::fs::write(&csv_path, csv_string(rows)?)?;
    let mut text = serde_json::to_string_pretty(&runs_json(rows))?;
    text.push('\n');
    std::fs::write(&json_path, text)?;
    Ok((csv_path, json_path))
}
