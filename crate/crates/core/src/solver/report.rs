//! Solve reports and their JSON form.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Compliance, IterationLog};
use crate::model::{AllocationState, Mode, ProblemSpec, Residuals};

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    /// Minimum user throughput of the binary solution, bit/s.
    pub objective_bps: f64,
    pub per_user_bps: Vec<f64>,
    pub aggregate_bps: f64,
    pub state: AllocationState,
    pub outer_iters: usize,
    /// `Σ(x − x²)` of the last relaxed iterate.
    pub penalty_residual: f64,
    /// Max-min throughput of the last relaxed iterate, bit/s.
    pub relaxed_objective_bps: f64,
    /// Relaxed minus rounded objective, bit/s.
    pub rounding_gap_bps: f64,
    pub residuals: Residuals,
    pub converged: bool,
    pub history: Vec<IterationLog>,
    /// Present for adaptive-width solves.
    pub compliance: Option<Compliance>,
    pub wall_ms: f64,
}

impl SolveReport {
    /// Sub-band center frequencies of the solution, Hz.
    pub fn centers(&self, spec: &ProblemSpec) -> Vec<f64> {
        spec.centers(&self.state.b)
    }

    /// Compact JSON: binary `x` run-length encoded as `[value, count]` pairs
    /// over the flat `(i, j, s)` order.
    pub fn to_json(&self, spec: &ProblemSpec) -> Value {
        let d = self.state.dims;
        json!({
            "mode": self.mode,
            "objective_bps": self.objective_bps,
            "per_user_bps": self.per_user_bps,
            "aggregate_bps": self.aggregate_bps,
            "dims": { "users": d.users, "aps": d.aps, "bands": d.bands },
            "x": run_length(&self.state.x),
            "P_watts": self.state.p,
            "B_hz": self.state.b,
            "f_center_hz": self.centers(spec),
            "iters": self.outer_iters,
            "penalty_residual": self.penalty_residual,
            "relaxed_objective_bps": self.relaxed_objective_bps,
            "rounding_gap_bps": self.rounding_gap_bps,
            "residuals": self.residuals,
            "converged": self.converged,
            "history": self.history,
            "compliance": self.compliance,
            "wall_ms": self.wall_ms,
        })
    }
}

/// `[value, count]` runs of a binary vector.
pub fn run_length(x: &[f64]) -> Vec<[u64; 2]> {
    let mut out: Vec<[u64; 2]> = Vec::new();
    for &v in x {
        let bit = u64::from(v > 0.5);
        match out.last_mut() {
            Some(run) if run[0] == bit => run[1] += 1,
            _ => out.push([bit, 1]),
        }
    }
    out
}

/// Inverse of [`run_length`].
pub fn expand_runs(runs: &[[u64; 2]]) -> Vec<f64> {
    runs.iter()
        .flat_map(|&[bit, n]| std::iter::repeat_n(bit as f64, n as usize))
        .collect()
}
