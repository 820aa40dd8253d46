//! Equal-width solve: penalty-relaxed successive approximation over the
//! joint assignment/power block, then rounding, local search and a power
//! polish.

use std::cmp::Ordering;
use std::time::Instant;

use super::barrier::solve_convex;
use super::local::{improve_assignment, improve_assignment_capped, score_cmp};
use super::report::SolveReport;
use super::rounding::{round_assignment, RoundingRules};
use super::waterfill::optimize_powers;
use super::{min_of, require_mode, summarize, IterationLog, SolverConfig};
use crate::baselines::{damc_assign, DamcConfig};
use crate::error::{Error, Result};
use crate::model::subproblem::{eligible_links, Layout, SubproblemOptions};
use crate::model::{build_subproblem, user_throughput, AllocationState, FixedBlock, ProblemSpec};
use crate::units::{POWER_UNIT_W, RATE_UNIT_BPS};

/// Relative change below which two consecutive relaxed iterates count as
/// the same point.
pub const STALL_TOL: f64 = 1e-9;

/// Relaxed iterate at the end of a successive-approximation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedOutcome {
    /// Relaxed assignment, zero on ineligible links.
    pub x: Vec<f64>,
    /// Powers implied by the perspective variables, W.
    pub p: Vec<f64>,
    /// Max-min throughput of the last iterate, bit/s.
    pub relaxed_bps: f64,
    pub penalty: f64,
    pub history: Vec<IterationLog>,
    /// False when a convex solve failed before the penalty dropped below ε.
    pub clean: bool,
}

/// Runs the penalty loop on the assignment/power block at fixed widths `b`,
/// starting from `anchor`.
pub fn assignment_sca(spec: &ProblemSpec, b: &[f64], anchor: &[f64], cfg: &SolverConfig) -> Result<RelaxedOutcome> {
    let d = spec.dims();
    let opts = SubproblemOptions {
        lambda: cfg.lambda,
        aggregate_weight: cfg.aggregate_weight,
        ..Default::default()
    };
    let mut bcfg = cfg.barrier();
    let mut anchor = anchor.to_vec();
    let mut history = Vec::new();
    let mut best: Option<RelaxedOutcome> = None;
    for iter in 0..cfg.max_outer_iters {
        let sub = build_subproblem(spec, &anchor, &FixedBlock::Bandwidths(b.to_vec()), &opts)?;
        let Layout::Assignment(lay) = &sub.layout else {
            unreachable!("width-fixed block has the assignment layout")
        };
        // Measure the gap against the throughput level, not the penalty constant.
        bcfg.gap_scale = Some(history.last().map_or(1.0, |h: &IterationLog| h.relaxed_bps / RATE_UNIT_BPS));
        let sol = match solve_convex(&sub.problem, Some(&sub.start), &bcfg) {
            Ok(s) if s.eq_residual <= 1e-6 => s,
            Ok(s) => {
                log::debug!("assignment block left equality residual {:.3e}", s.eq_residual);
                break;
            }
            Err(e) => {
                log::debug!("assignment block failed: {e}");
                break;
            }
        };
        let mut x = vec![0.0; d.len()];
        let mut p = vec![0.0; d.len()];
        for (c, &k) in lay.cols.iter().enumerate() {
            let xv = sol.v[lay.x_var[c]].clamp(0.0, 1.0);
            x[k] = xv;
            if xv > 0.0 {
                p[k] = (sol.v[lay.q_var[c]] / sol.v[lay.x_var[c]]).clamp(0.0, spec.system.p_max / POWER_UNIT_W)
                    * POWER_UNIT_W;
            }
        }
        let penalty: f64 = x.iter().map(|v| v - v * v).sum();
        let t = sol.v[lay.t];
        history.push(IterationLog {
            iter,
            relaxed_bps: t * RATE_UNIT_BPS,
            penalty,
            penalized_objective: t - cfg.lambda * penalty,
            newton_iters: sol.newton_iters,
            converged: sol.converged,
        });
        log::debug!(
            "sca iter {iter}: t = {:.6} Gbit/s, penalty = {:.3e}, newton = {}",
            t,
            penalty,
            sol.newton_iters
        );
        // A repeated iterate is a fixed point of the loop.
        let stalled = best.as_ref().is_some_and(|b: &RelaxedOutcome| {
            (b.penalty - penalty).abs() <= STALL_TOL * penalty.max(1.0)
                && (b.relaxed_bps - t * RATE_UNIT_BPS).abs() <= STALL_TOL * b.relaxed_bps.abs()
        });
        if stalled {
            log::debug!("penalty loop stalled at penalty {penalty:.3e}");
        }
        let done = penalty < cfg.epsilon || stalled;
        best = Some(RelaxedOutcome {
            x: x.clone(),
            p,
            relaxed_bps: t * RATE_UNIT_BPS,
            penalty,
            history: Vec::new(),
            clean: true,
        });
        if done {
            break;
        }
        anchor = x;
    }
    match best {
        Some(mut out) => {
            out.clean = out.penalty < cfg.epsilon;
            out.history = history;
            Ok(out)
        }
        None => {
            // No relaxed iterate: hand the uniform anchor to the rounding.
            Ok(RelaxedOutcome {
                x: anchor,
                p: vec![0.0; d.len()],
                relaxed_bps: f64::NAN,
                penalty: f64::NAN,
                history,
                clean: false,
            })
        }
    }
}

/// Rounds a relaxed assignment, improves it by local search and
/// re-optimizes powers at widths `b`.
pub fn round_and_polish(spec: &ProblemSpec, x: &[f64], b: &[f64]) -> Result<AllocationState> {
    let d = spec.dims();
    let mut allowed = vec![false; d.len()];
    let mut cost = vec![0.0; d.len()];
    for (k, floor) in eligible_links(spec, b) {
        allowed[k] = true;
        let (i, j, _) = d.triple(k);
        cost[k] = spec.links.p_nb(i, j) * floor;
    }
    let rules = RoundingRules {
        dims: d,
        mc_order: spec.system.mc_order,
        ap_capacity: spec.system.ap_capacity,
        allowed: &allowed,
        floor_cost: Some((&cost, spec.system.p_max)),
    };
    let mut last_err: Option<Error> = None;
    let xb = round_assignment(x, &rules, &mut |cand| match optimize_powers(spec, cand, b) {
        Ok(_) => true,
        Err(e) => {
            last_err = Some(e);
            false
        }
    });
    let xb = match xb {
        Ok(v) => v,
        Err(Error::Infeasible { constraint, detail }) => {
            // Name the last power-side failure when that is what blocked every candidate.
            return Err(last_err.unwrap_or(Error::Infeasible { constraint, detail }));
        }
        Err(e) => return Err(e),
    };
    let mut xb = xb;
    let moves = improve_assignment(spec, &mut xb, b);
    if moves > 0 {
        log::debug!("local search took {moves} moves");
    }
    let p = optimize_powers(spec, &xb, b)?;
    Ok(AllocationState {
        dims: d,
        x: xb,
        p,
        b: b.to_vec(),
    })
}

/// Best equal-width state from the relaxation and from the DAMC assignment,
/// both polished by local search, with the relaxation outcome.
pub(crate) fn equal_width_state(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<(AllocationState, RelaxedOutcome)> {
    let b = spec.esb_bandwidths();
    let anchor = vec![0.5; spec.dims().len()];
    let relaxed = assignment_sca(spec, &b, &anchor, cfg)?;
    let from_relaxed = round_and_polish(spec, &relaxed.x, &b);
    // The DAMC assignment is feasible for the same problem.
    let from_damc = damc_assign(
        &spec.links,
        &spec.plan(&b)?,
        spec.system.mc_order,
        spec.system.ap_capacity,
        &DamcConfig::default(),
    )
    .and_then(|mut x| {
        optimize_powers(spec, &x, &b)?;
        improve_assignment(spec, &mut x, &b);
        let p = optimize_powers(spec, &x, &b)?;
        Ok(AllocationState {
            dims: spec.dims(),
            x,
            p,
            b: b.clone(),
        })
    });
    let mut pool: Vec<AllocationState> = Vec::new();
    let mut first_err = None;
    for cand in [from_relaxed, from_damc] {
        match cand {
            Ok(c) => pool.push(c),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(mut state) = best_of(spec, pool.clone()) else {
        return Err(first_err.expect("no candidate without an error"));
    };
    // Second pass from each start: hold the reached level, then raise the sum.
    let level = min_of(&user_throughput(&state, spec));
    for mut c in pool {
        let sum_before: f64 = user_throughput(&c, spec).iter().sum();
        improve_assignment_capped(spec, &mut c.x, &b, level);
        if let Ok(p) = optimize_powers(spec, &c.x, &b) {
            c.p = p;
            let r = user_throughput(&c, spec);
            log::debug!("level-held pass: sum {:.6e} -> {:.6e}", sum_before, r.iter().sum::<f64>());
            if let Some(better) = best_of(spec, vec![state.clone(), c]) {
                state = better;
            }
        }
    }
    Ok((state, relaxed))
}

/// Lexicographically best of `pool` by (minimum, sum) throughput; earlier
/// entries win ties.
fn best_of(spec: &ProblemSpec, pool: Vec<AllocationState>) -> Option<AllocationState> {
    let mut best: Option<(Vec<f64>, AllocationState)> = None;
    for c in pool {
        let r = user_throughput(&c, spec);
        if best.as_ref().is_none_or(|(br, _)| score_cmp(&r, br) == Ordering::Greater) {
            best = Some((r, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Equal-width max-min solve.
pub fn solve_esb(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    let started = Instant::now();
    spec.validate()?;
    cfg.validate()?;
    require_mode(spec, false)?;
    let (state, relaxed) = equal_width_state(spec, cfg)?;
    Ok(finish(spec, cfg, state, relaxed, None, started))
}

pub(crate) fn finish(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    state: AllocationState,
    relaxed: RelaxedOutcome,
    compliance: Option<super::Compliance>,
    started: Instant,
) -> SolveReport {
    let (per_user, residuals, feasible, state) = summarize(spec, state, cfg);
    let objective = min_of(&per_user);
    let converged = relaxed.clean && feasible;
    SolveReport {
        mode: spec.mode,
        objective_bps: objective,
        aggregate_bps: per_user.iter().sum(),
        per_user_bps: per_user,
        state,
        outer_iters: relaxed.history.len(),
        penalty_residual: relaxed.penalty,
        relaxed_objective_bps: relaxed.relaxed_bps,
        rounding_gap_bps: relaxed.relaxed_bps - objective,
        residuals,
        converged,
        history: relaxed.history,
        compliance,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}
