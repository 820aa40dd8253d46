//! Configuration, sweep and binary behavior.

use std::path::Path;
use std::process::Command;

use thz_alloc::cli::config::{ExperimentConfig, Strategy, SweepVariable};
use thz_alloc::cli::sweep::{run_sweep, RunStatus};
use thz_alloc::cli::{emit, EXIT_CONFIG, EXIT_OK};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thz-alloc"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const BASELINE_SWEEP: &str = r#"
seeds = [1, 2]
strategies = ["DAMC", "EQ"]
[sweep]
variable = "p_max"
values = [0.5, 1.0]
"#;

#[test]
fn mc_order_holds_band_count() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.fixed_band_count(), 12);
    for (n, users) in [(1, 12), (2, 6), (3, 4), (4, 3)] {
        let c = cfg.with_value(SweepVariable::McOrder, n as f64).unwrap();
        assert_eq!(c.system.mc_order, n);
        assert_eq!(c.scenario.num_users, users);
        let spec = c.build_spec(1, thz_alloc::model::Mode::Esb).unwrap();
        assert_eq!(spec.num_bands(), 12);
    }
    assert!(cfg.with_value(SweepVariable::McOrder, 5.0).is_err());
}

#[test]
fn empty_strategies_rejected() {
    let err = ExperimentConfig::from_toml_str("strategies = []").unwrap_err();
    assert!(matches!(err, thz_alloc::Error::Config(_)));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", "strategies = []\n");
    let out = bin().args(["sweep", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u.toml", "[system]\npmax = 1.0\n");
    let out = bin().args(["solve-esb", "-c"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn blockers_lower_aggregate() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
seeds = [1]
strategies = ["ESB"]
[sweep]
variable = "lambda_b"
values = [0.0, 0.2]
"#,
    )
    .unwrap();
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.status == RunStatus::Ok && r.strategy == Strategy::Esb));
    assert!(rows[0].aggregate_bps > rows[1].aggregate_bps);
}

#[test]
fn csv_bookkeeping() {
    let cfg = ExperimentConfig::from_toml_str(BASELINE_SWEEP).unwrap();
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    let text = emit::csv_string(&rows).unwrap();
    assert!(!text.contains('\r'));
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let head = rd.headers().unwrap().clone();
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    let b_tot = cfg.spectrum.b_tot;
    let mut n = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let agg: f64 = rec[col("aggregate_bps")].parse().unwrap();
        let sum: f64 = rec[col("per_user_bps")].split(';').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((agg - sum).abs() <= 1e-9 * agg, "{agg} vs {sum}");
        let eff: f64 = rec[col("spectral_eff_bps_per_hz")].parse().unwrap();
        assert!((eff - agg / b_tot).abs() <= 1e-12 * eff);
        assert_eq!(&rec[col("wall_ms")], "");
        n += 1;
    }
    assert_eq!(n, rows.len());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", BASELINE_SWEEP);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let st = bin()
            .args(["sweep", "-c"])
            .arg(&cfg)
            .env("THZ_ALLOC_OUTPUT_DIR", &out_dir)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(EXIT_OK));
        outputs.push((
            std::fs::read(out_dir.join("results.csv")).unwrap(),
            std::fs::read(out_dir.join("runs.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn solve_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let st = bin().args(["solve-esb", "--seed", "3", "-o"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(v["objective_bps"].as_f64().unwrap() > 0.0);
    assert!(v.get("wall_ms").is_none());
}

#[test]
fn blockage_command_agrees() {
    let out = bin().arg("validate-blockage").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["within_three_half_widths"], true);
}

#[test]
fn fit_command_reports_parameters() {
    let out = bin().arg("fit-absorption").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["sigma2"].as_f64().unwrap() > 0.0);
}
