//! Convex subproblem solving and the outer successive-approximation loops.

pub mod asb;
pub mod barrier;
pub mod concavity;
pub mod esb;
pub mod local;
pub mod report;
pub mod rounding;
pub mod waterfill;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{constraint_residuals, user_throughput, AllocationState, ProblemSpec, Residuals};

pub use asb::solve_asb;
pub use barrier::{solve_convex, BarrierConfig, ConvexSolution};
pub use concavity::{check_concavity, ConcavityReport};
pub use esb::solve_esb;
pub use report::SolveReport;
pub use waterfill::optimize_powers;

/// Tuning of the outer loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative tolerance on constraint residuals and convex-solve gaps.
    pub kkt_tol: f64,
    /// Newton-step cap per convex solve.
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// Exit threshold on `Σ(x − x²)`.
    pub epsilon: f64,
    /// Penalty factor on fractional assignments, per Gbit/s of objective.
    pub lambda: f64,
    /// Weight of the sum throughput added to the max-min objective inside
    /// the convex blocks; zero solves the pure max-min problem.
    pub aggregate_weight: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_inner_iters: 2000,
            max_outer_iters: 100,
            epsilon: 1e-6,
            lambda: 200.0,
            aggregate_weight: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kkt_tol > 0.0
            && self.max_inner_iters > 0
            && self.max_outer_iters > 0
            && self.epsilon > 0.0
            && self.lambda >= 0.0
            && self.aggregate_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver configuration {self:?}")))
        }
    }

    fn barrier(&self) -> BarrierConfig {
        BarrierConfig {
            gap_tol: self.kkt_tol,
            max_newton: self.max_inner_iters,
            ..Default::default()
        }
    }
}

/// One outer iteration of a successive-approximation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    /// Max-min throughput of the relaxed iterate, bit/s.
    pub relaxed_bps: f64,
    /// `Σ(x − x²)` of the iterate.
    pub penalty: f64,
    /// `t − Λ·Σ(x − x²)` in the optimizer's rate units.
    pub penalized_objective: f64,
    pub newton_iters: usize,
    pub converged: bool,
}

/// How the substitution slope relates to the concavity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    pub omega_requested: f64,
    pub omega_used: f64,
    pub omega_bar: f64,
    pub compliant: bool,
    pub shrunk: bool,
}

pub(crate) fn require_mode(spec: &ProblemSpec, adaptive: bool) -> Result<()> {
    if spec.mode.is_adaptive() != adaptive {
        let want = if adaptive { "an adaptive mode" } else { "equal-width mode" };
        return Err(Error::ModeMismatch(format!("solver needs {want}, spec has {:?}", spec.mode)));
    }
    Ok(())
}

/// Throughputs, residuals and convergence of a final binary state.
pub(crate) fn summarize(
    spec: &ProblemSpec,
    state: AllocationState,
    cfg: &SolverConfig,
) -> (Vec<f64>, Residuals, bool, AllocationState) {
    let per_user = user_throughput(&state, spec);
    let residuals = constraint_residuals(&state, spec);
    let ok = residuals.within(cfg.kkt_tol);
    (per_user, residuals, ok, state)
}

pub(crate) fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}
