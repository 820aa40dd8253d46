//! Adaptive-width solve.
//!
//! Starts from the equal-width solution, then alternates width steps in the
//! substituted variables `Z` (assignment and powers fixed, budget row
//! linearized, change of each width limited by a trust radius) with a power
//! water-fill. When the radius collapses, the assignment is re-optimized at
//! the new widths and another width round follows if that helped. Steps are
//! accepted only when they raise the max-min objective, or keep it and raise
//! the sum throughput. Each round ends with steps that maximize the sum while
//! every user stays at the reached max-min level. No step lowers the
//! aggregate below that of the equal-width start.

use std::cmp::Ordering;
use std::time::Instant;

use super::barrier::solve_convex;
use super::esb::{assignment_sca, equal_width_state, finish, round_and_polish};
use super::local::score_cmp_tol;
use super::report::SolveReport;
use super::waterfill::optimize_powers;
use super::{min_of, require_mode, Compliance, SolverConfig};
use crate::error::Result;
use crate::model::subproblem::{Layout, SubproblemOptions};
use crate::model::{build_subproblem, user_throughput, AllocationState, FixedBlock, ProblemSpec};
use crate::spectrum::{enforce_compliance, omega_bar};
use crate::units::RATE_UNIT_BPS;

/// Relative margin by which the bound distance `D` exceeds the longest link.
pub const DISTANCE_MARGIN: f64 = 1e-6;

/// Relative slack below the reached max-min level allowed to the sum
/// maximization subproblem.
pub const LEVEL_SLACK: f64 = 1e-7;

/// Relative gain in the minimum, or else in the sum, that a step or
/// re-assignment must achieve to be accepted.
pub const IMPROVEMENT_TOL: f64 = 1e-6;

/// Starting width trust radius as a fraction of the equal width.
pub const INITIAL_RADIUS: f64 = 0.25;

/// Radius (same units) below which a width round ends.
pub const MIN_RADIUS: f64 = 1e-4;

const GROW: f64 = 2.0;
const SHRINK: f64 = 0.25;

/// Steps of the sum phase per round.
pub const SUM_PHASE_STEPS: usize = 20;

/// Width/assignment rounds at most.
pub const MAX_ROUNDS: usize = 5;

/// Concavity bound for `spec` and the substitution actually used.
pub fn compliance_for(spec: &ProblemSpec) -> Result<Compliance> {
    let d_max = spec.links.d_max();
    let bound = omega_bar(&spec.fit, spec.most_absorbing_edge(), d_max * (1.0 + DISTANCE_MARGIN), d_max)?;
    let (sub, shrunk) = enforce_compliance(spec.substitution, bound);
    Ok(Compliance {
        omega_requested: spec.substitution.omega,
        omega_used: sub.omega,
        omega_bar: bound,
        compliant: sub.complies(bound),
        shrunk,
    })
}

/// Closes the gap between `Σ b` and `target` by rescaling `b − δ`, clamping
/// at `b_max` and spreading any clamped excess over the remaining bands.
pub fn project_widths(b: &[f64], target: f64, delta: f64, b_max: f64) -> Vec<f64> {
    let mut out: Vec<f64> = b.iter().map(|&v| v.clamp(delta, b_max)).collect();
    let mut fixed = vec![false; out.len()];
    for _ in 0..out.len() + 1 {
        let free_sum: f64 = out.iter().zip(&fixed).filter(|(_, &f)| !f).map(|(v, _)| v - delta).sum();
        let fixed_sum: f64 = out.iter().zip(&fixed).filter(|(_, &f)| f).map(|(v, _)| *v).sum();
        let n_free = fixed.iter().filter(|&&f| !f).count() as f64;
        let want = target - fixed_sum - n_free * delta;
        if n_free == 0.0 || free_sum <= 0.0 {
            break;
        }
        let scale = want / free_sum;
        let mut clamped = false;
        for (v, f) in out.iter_mut().zip(fixed.iter_mut()) {
            if *f {
                continue;
            }
            *v = delta + (*v - delta) * scale;
            if *v > b_max {
                *v = b_max;
                *f = true;
                clamped = true;
            }
        }
        if !clamped {
            break;
        }
    }
    out
}

/// One width step at fixed assignment and powers; returns projected widths
/// and the budget gap before projection. With `level_floor` (bit/s) the step
/// maximizes the sum throughput above that level.
fn width_step(
    spec: &ProblemSpec,
    state: &AllocationState,
    radius: f64,
    level_floor: Option<f64>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, f64)> {
    let opts = SubproblemOptions {
        lambda: cfg.lambda,
        aggregate_weight: cfg.aggregate_weight,
        trust_radius: Some(radius),
        level_floor: level_floor.map(|v| v / RATE_UNIT_BPS),
        ..Default::default()
    };
    let fixed = FixedBlock::AssignmentPower {
        x: state.x.clone(),
        p: state.p.clone(),
        b: state.b.clone(),
    };
    let sub = build_subproblem(spec, &state.x, &fixed, &opts)?;
    let Layout::Bandwidth(lay) = &sub.layout else {
        unreachable!("power-fixed block has the bandwidth layout")
    };
    let sol = solve_convex(&sub.problem, Some(&sub.start), &cfg.barrier())?;
    let raw: Vec<f64> = lay
        .z_var
        .iter()
        .map(|&i| spec.substitution.b_from_z(sol.v[i]))
        .collect::<Result<_>>()?;
    let target = spec.usable_bandwidth();
    let gap = (target - raw.iter().sum::<f64>()).abs();
    Ok((project_widths(&raw, target, spec.delta, spec.system.b_max), gap))
}

/// Adaptive-width max-min solve.
pub fn solve_asb(spec: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    let started = Instant::now();
    spec.validate()?;
    cfg.validate()?;
    require_mode(spec, true)?;
    let compliance = compliance_for(spec)?;
    let mut work = spec.clone();
    work.substitution.omega = compliance.omega_used;

    let (mut state, mut relaxed) = equal_width_state(&work, cfg)?;
    let mut rates = user_throughput(&state, &work);
    // Neither the max-min value nor the aggregate may fall below the start.
    let start_sum: f64 = rates.iter().sum();
    let accepts = |cand: &[f64], cur: &[f64]| {
        score_cmp_tol(cand, cur, IMPROVEMENT_TOL) == Ordering::Greater && cand.iter().sum::<f64>() >= start_sum
    };

    let usable = work.usable_bandwidth();
    let pinned = work.num_bands() as f64 * work.system.b_max <= usable * (1.0 + 1e-9);
    let r_init = INITIAL_RADIUS * work.esb_width();
    let r_min = MIN_RADIUS * work.esb_width();
    // No width can move by more than the cap allows.
    let r_cap = work.system.b_max - work.delta;
    let mut capped = false;
    if !pinned {
        for round in 0..MAX_ROUNDS {
            // Max-min steps, then sum steps holding the reached level.
            for hold_level in [false, true] {
                let phase_floor = hold_level.then(|| min_of(&rates) * (1.0 - LEVEL_SLACK));
                let mut radius = r_init;
                let mut steps = 0usize;
                let step_cap = if hold_level { SUM_PHASE_STEPS.min(cfg.max_outer_iters) } else { cfg.max_outer_iters };
                while radius >= r_min {
                    if steps == step_cap {
                        // The sum phase is a bounded refinement; only the max-min phase must settle.
                        capped |= !hold_level;
                        break;
                    }
                    steps += 1;
                    let (b_new, gap) = match width_step(&work, &state, radius, phase_floor, cfg) {
                        Ok(v) => v,
                        Err(e) => {
                            log::debug!("width step failed at radius {radius:.3e}: {e}");
                            radius *= SHRINK;
                            continue;
                        }
                    };
                    let cand = optimize_powers(&work, &state.x, &b_new).ok().map(|p| AllocationState {
                        dims: state.dims,
                        x: state.x.clone(),
                        p,
                        b: b_new,
                    });
                    let better = cand
                        .map(|c| (user_throughput(&c, &work), c))
                        .filter(|(r, _)| accepts(r, &rates));
                    match better {
                        Some((r, c)) => {
                            log::debug!(
                                "round {round}: width step at radius {radius:.3e} -> min {:.6e}, sum {:.6e} bit/s (gap {gap:.3e} Hz)",
                                min_of(&r),
                                r.iter().sum::<f64>()
                            );
                            rates = r;
                            state = c;
                            radius = (radius * GROW).min(r_cap);
                        }
                        None => radius *= SHRINK,
                    }
                }
            }
            // Re-assign at the new widths; another width round only if that helps.
            let t0 = Instant::now();
            // Halfway to the uniform point: biased to the current assignment, never symmetric.
            let anchor: Vec<f64> = state.x.iter().map(|v| 0.25 + 0.5 * v).collect();
            let Ok(r) = assignment_sca(&work, &state.b, &anchor, cfg) else { break };
            log::debug!("re-assignment relaxation took {:.1}s", t0.elapsed().as_secs_f64());
            let Ok(cand) = round_and_polish(&work, &r.x, &state.b) else { break };
            log::debug!("re-assignment rounding took {:.1}s", t0.elapsed().as_secs_f64());
            let cand_rates = user_throughput(&cand, &work);
            if accepts(&cand_rates, &rates) {
                log::debug!("round {round}: re-assignment -> min {:.6e} bit/s", min_of(&cand_rates));
                rates = cand_rates;
                state = cand;
                relaxed = r;
            } else {
                break;
            }
        }
    }
    // Width rounds end at a collapsed trust radius unless the step cap cut them short.
    let stationary = !capped;
    if capped {
        log::warn!("the max-min width phase stopped at the cap of {} steps", cfg.max_outer_iters);
    }
    let mut report = finish(&work, cfg, state, relaxed, Some(compliance), started);
    report.mode = spec.mode;
    report.converged &= stationary;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_hits_target() {
        let b = project_widths(&[1.0, 2.0, 3.0], 9.0, 0.0, 10.0);
        assert_relative_eq!(b.iter().sum::<f64>(), 9.0, max_relative = 1e-14);
        assert_relative_eq!(b[2], 4.5, max_relative = 1e-14);
    }

    #[test]
    fn projection_respects_cap() {
        let b = project_widths(&[1.0, 1.0, 4.0], 12.0, 0.5, 5.0);
        assert_eq!(b[2], 5.0);
        assert_relative_eq!(b.iter().sum::<f64>(), 12.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn projection_is_feasible(
            b in proptest::collection::vec(0.1f64..5.0, 2..12),
            frac in 0.3f64..0.95,
        ) {
            let (delta, b_max) = (0.05, 5.0);
            let target = frac * b_max * b.len() as f64;
            let out = project_widths(&b, target, delta, b_max);
            prop_assert!((out.iter().sum::<f64>() - target).abs() <= 1e-9 * target);
            for v in out {
                prop_assert!(v >= delta && v <= b_max);
            }
        }
    }
}
