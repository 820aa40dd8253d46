//! Running strategies over seeds and sweep values.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, Strategy};
use crate::baselines::{damc, equal_power_equal_band_report};
use crate::error::{Error, Result};
use crate::model::{Mode, ProblemSpec};
use crate::solver::{solve_asb, solve_esb, SolveReport};

/// Outcome class of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Infeasible,
    Error,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Error => "error",
        }
    }
}

/// One (sweep value, seed, strategy) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub status: RunStatus,
    pub objective_bps: f64,
    pub aggregate_bps: f64,
    pub min_user_bps: f64,
    pub per_user_bps: Vec<f64>,
    pub spectral_eff_bps_per_hz: f64,
    pub penalty_residual: f64,
    pub converged: bool,
    pub wall_ms: Option<f64>,
    /// Full report, or the error message for failed runs.
    pub detail: Value,
}

/// Solves one strategy on the scenario of `seed`.
pub fn run_strategy(cfg: &ExperimentConfig, seed: u64, strategy: Strategy) -> Result<(SolveReport, ProblemSpec)> {
    let mode = if strategy == Strategy::Asb {
        cfg.adaptive_mode()
    } else {
        Mode::Esb
    };
    let spec = cfg.build_spec(seed, mode)?;
    let report = match strategy {
        Strategy::Esb => solve_esb(&spec, &cfg.solver)?,
        Strategy::Asb => solve_asb(&spec, &cfg.solver)?,
        Strategy::Damc => damc(&spec, &cfg.damc, &cfg.solver)?,
        Strategy::Eq => equal_power_equal_band_report(&spec, &cfg.damc, &cfg.solver)?,
    };
    Ok((report, spec))
}

fn row(cfg: &ExperimentConfig, var: &str, value: f64, seed: u64, strategy: Strategy) -> SweepRow {
    let started = Instant::now();
    let outcome = run_strategy(cfg, seed, strategy);
    let wall_ms = cfg.output.record_timing.then(|| started.elapsed().as_secs_f64() * 1e3);
    let base = SweepRow {
        sweep_var: var.to_string(),
        sweep_value: value,
        seed,
        strategy,
        status: RunStatus::Ok,
        objective_bps: f64::NAN,
        aggregate_bps: f64::NAN,
        min_user_bps: f64::NAN,
        per_user_bps: Vec::new(),
        spectral_eff_bps_per_hz: f64::NAN,
        penalty_residual: f64::NAN,
        converged: false,
        wall_ms,
        detail: Value::Null,
    };
    match outcome {
        Ok((r, spec)) => SweepRow {
            objective_bps: r.objective_bps,
            aggregate_bps: r.aggregate_bps,
            min_user_bps: r.per_user_bps.iter().copied().fold(f64::INFINITY, f64::min),
            spectral_eff_bps_per_hz: r.aggregate_bps / spec.frame.b_tot,
            penalty_residual: r.penalty_residual,
            converged: r.converged,
            detail: report_json(&r, &spec, cfg.output.record_timing),
            per_user_bps: r.per_user_bps,
            ..base
        },
        Err(e) => {
            log::warn!("{var} = {value}, seed {seed}, {}: {e}", strategy.label());
            SweepRow {
                status: if matches!(e, Error::Infeasible { .. }) {
                    RunStatus::Infeasible
                } else {
                    RunStatus::Error
                },
                detail: Value::String(e.to_string()),
                ..base
            }
        }
    }
}

/// Report JSON; wall time is dropped unless timing is recorded.
pub fn report_json(r: &SolveReport, spec: &ProblemSpec, record_timing: bool) -> Value {
    let mut v = r.to_json(spec);
    if !record_timing {
        if let Some(o) = v.as_object_mut() {
            o.remove("wall_ms");
        }
    }
    v
}

/// Runs every (value, seed, strategy) of the configured sweep. Pairs of
/// value and seed run in parallel; rows come back in config order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let Some(sweep) = &cfg.sweep else {
        return Err(Error::Config("no [sweep] section".into()));
    };
    let configs: Vec<ExperimentConfig> = sweep
        .values
        .iter()
        .map(|&v| cfg.with_value(sweep.variable, v))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let var = sweep.variable.label();
    let rows: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            cfg.strategies
                .iter()
                .map(|&st| row(&configs[k], var, sweep.values[k], seed, st))
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Rows for the base config without a sweep (one per seed and strategy).
pub fn run_plain(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let rows: Vec<Vec<SweepRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| cfg.strategies.iter().map(|&st| row(cfg, "none", f64::NAN, seed, st)).collect())
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Process exit status for a batch of rows: infeasible everywhere, any
/// optimizer run left unconverged, or success.
pub fn batch_exit_code(rows: &[SweepRow]) -> i32 {
    if !rows.is_empty() && rows.iter().all(|r| r.status == RunStatus::Infeasible) {
        return super::EXIT_INFEASIBLE;
    }
    if rows
        .iter()
        .any(|r| r.strategy.is_optimizer() && (r.status == RunStatus::Error || (r.status == RunStatus::Ok && !r.converged)))
    {
        return super::EXIT_NON_CONVERGENCE;
    }
    super::EXIT_OK
}
