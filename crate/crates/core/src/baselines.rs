//! Reference allocations: the distance-aware multi-carrier (DAMC) benchmark,
//! an equal-power/equal-band allocation, and an exhaustive oracle for toy
//! instances.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{constraint_residuals, user_throughput, AllocationState, ProblemSpec};
use crate::scenario::LinkTable;
use crate::solver::report::SolveReport;
use crate::solver::rounding::{enumerate_assignments, RoundingRules};
use crate::solver::waterfill::optimize_powers;
use crate::solver::SolverConfig;
use crate::spectrum::SpectrumPlan;

/// Which sub-bands the longest links receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DamcOrientation {
    /// Longest links get the bands closest to the window center.
    #[default]
    LongToCenter,
    /// Longest links get the bands farthest from the window center.
    LongToEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamcConfig {
    /// Center of the transmission window, Hz.
    pub tw_center: f64,
    pub orientation: DamcOrientation,
}

impl Default for DamcConfig {
    fn default() -> Self {
        Self {
            tw_center: 1.025e12,
            orientation: DamcOrientation::LongToCenter,
        }
    }
}

/// Associates each user with its `mc_order` nearest APs (greedy over all
/// pairs by distance, respecting `ap_capacity`), then pairs links sorted by
/// decreasing distance with bands sorted by distance to the window center.
pub fn damc_assign(
    links: &LinkTable,
    plan: &SpectrumPlan,
    mc_order: usize,
    ap_capacity: usize,
    cfg: &DamcConfig,
) -> Result<Vec<f64>> {
    let (ni, nj) = (links.num_users, links.num_aps);
    let s_count = plan.num_bands();
    if s_count != ni * mc_order {
        return Err(Error::InvalidInput(format!(
            "{s_count} sub-bands for {ni} users of MC order {mc_order}"
        )));
    }
    let mut pairs: Vec<(usize, usize)> = (0..ni).flat_map(|i| (0..nj).map(move |j| (i, j))).collect();
    pairs.sort_by(|a, b| links.d(a.0, a.1).total_cmp(&links.d(b.0, b.1)).then(a.cmp(b)));
    let mut per_user = vec![0usize; ni];
    let mut per_ap = vec![0usize; nj];
    let mut assoc = Vec::with_capacity(s_count);
    for (i, j) in pairs {
        if per_user[i] < mc_order && per_ap[j] < ap_capacity {
            per_user[i] += 1;
            per_ap[j] += 1;
            assoc.push((i, j));
        }
    }
    if let Some(i) = per_user.iter().position(|&c| c < mc_order) {
        return Err(Error::Infeasible {
            constraint: "ap_capacity".into(),
            detail: format!("user {i} cannot be associated with {mc_order} APs under the AP cap"),
        });
    }
    // Longest first; ties in the lexicographic pair order.
    assoc.sort_by(|a, b| links.d(b.0, b.1).total_cmp(&links.d(a.0, a.1)).then(a.cmp(b)));
    let centers = plan.center_frequencies()?;
    let mut bands: Vec<usize> = (0..s_count).collect();
    let dist = |s: usize| (centers[s] - cfg.tw_center).abs();
    match cfg.orientation {
        DamcOrientation::LongToCenter => bands.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b))),
        DamcOrientation::LongToEdge => bands.sort_by(|&a, &b| dist(b).total_cmp(&dist(a)).then(a.cmp(&b))),
    }
    let mut x = vec![0.0; ni * nj * s_count];
    for (&(i, j), &s) in assoc.iter().zip(&bands) {
        x[(i * nj + j) * s_count + s] = 1.0;
    }
    Ok(x)
}

fn report_for(spec: &ProblemSpec, state: AllocationState, cfg: &SolverConfig, started: Instant) -> SolveReport {
    let per_user = user_throughput(&state, spec);
    let residuals = constraint_residuals(&state, spec);
    let objective = per_user.iter().copied().fold(f64::INFINITY, f64::min);
    SolveReport {
        mode: spec.mode,
        objective_bps: objective,
        aggregate_bps: per_user.iter().sum(),
        per_user_bps: per_user,
        state,
        outer_iters: 0,
        penalty_residual: 0.0,
        relaxed_objective_bps: objective,
        rounding_gap_bps: 0.0,
        converged: residuals.within(cfg.kkt_tol),
        residuals,
        history: Vec::new(),
        compliance: None,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// DAMC assignment at equal widths with powers from the same fixed-assignment
/// optimization the main solver uses.
pub fn damc(spec: &ProblemSpec, damc_cfg: &DamcConfig, cfg: &SolverConfig) -> Result<SolveReport> {
    let started = Instant::now();
    spec.validate()?;
    let plan = spec.plan(&spec.esb_bandwidths())?;
    let x = damc_assign(&spec.links, &plan, spec.system.mc_order, spec.system.ap_capacity, damc_cfg)?;
    let p = optimize_powers(spec, &x, &plan.bandwidths)?;
    let state = AllocationState {
        dims: spec.dims(),
        x,
        p,
        b: plan.bandwidths,
    };
    Ok(report_for(spec, state, cfg, started))
}

/// DAMC assignment, equal widths and `P = P_max/(N·p_nb)` capped at `P_max`.
pub fn equal_power_equal_band(spec: &ProblemSpec, damc_cfg: &DamcConfig) -> Result<AllocationState> {
    spec.validate()?;
    let plan = spec.plan(&spec.esb_bandwidths())?;
    let x = damc_assign(&spec.links, &plan, spec.system.mc_order, spec.system.ap_capacity, damc_cfg)?;
    let d = spec.dims();
    let n = spec.system.mc_order as f64;
    let mut p = vec![0.0; d.len()];
    for (k, pk) in p.iter_mut().enumerate() {
        if x[k] > 0.5 {
            let (i, j, _) = d.triple(k);
            *pk = (spec.system.p_max / (n * spec.links.p_nb(i, j))).min(spec.system.p_max);
        }
    }
    Ok(AllocationState {
        dims: d,
        x,
        p,
        b: plan.bandwidths,
    })
}

/// [`equal_power_equal_band`] wrapped in a report.
pub fn equal_power_equal_band_report(
    spec: &ProblemSpec,
    damc_cfg: &DamcConfig,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let started = Instant::now();
    let state = equal_power_equal_band(spec, damc_cfg)?;
    Ok(report_for(spec, state, cfg, started))
}

/// Limits of the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Logarithmic power grid points per link over `[P_max·p_min_ratio, P_max]`.
    pub power_grid_points: usize,
    pub p_min_ratio: f64,
    /// Most binary assignments enumerated before refusing.
    pub assignment_cap: usize,
    /// Grid points per free sub-band width in adaptive mode.
    pub width_grid_points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            power_grid_points: 17,
            p_min_ratio: 1e-3,
            assignment_cap: 200_000,
            width_grid_points: 9,
        }
    }
}

/// Best allocation found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub objective_bps: f64,
    pub per_user_bps: Vec<f64>,
    pub state: AllocationState,
    pub assignments: usize,
    pub width_vectors: usize,
    /// Bound on how far the grid can fall short of the continuous optimum
    /// at the returned assignment, bit/s.
    pub grid_slack_bps: f64,
}

/// Exhaustive search over binary assignments, a logarithmic power grid and,
/// in adaptive mode, a width grid. Users are independent once assignment
/// and widths are fixed, so each user's power grid is searched separately
/// and the max-min value is the minimum of the per-user maxima.
pub fn brute_force(spec: &ProblemSpec, cfg: &OracleConfig) -> Result<OracleResult> {
    spec.validate()?;
    if cfg.power_grid_points < 2 || !(cfg.p_min_ratio > 0.0 && cfg.p_min_ratio < 1.0) {
        return Err(Error::InvalidInput("power grid needs at least two points in (0, P_max]".into()));
    }
    let d = spec.dims();
    let widths = if spec.mode.is_adaptive() {
        width_grid(spec, cfg.width_grid_points)?
    } else {
        vec![spec.esb_bandwidths()]
    };
    let all = vec![true; d.len()];
    let rules = RoundingRules {
        dims: d,
        mc_order: spec.system.mc_order,
        ap_capacity: spec.system.ap_capacity,
        allowed: &all,
        floor_cost: None,
    };
    let mut assignments = Vec::new();
    let count = enumerate_assignments(&rules, cfg.assignment_cap, &mut |x| assignments.push(x.to_vec()))?;
    let total = count.saturating_mul(widths.len());
    if total > cfg.assignment_cap {
        return Err(Error::CapExceeded {
            count: total as u128,
            cap: cfg.assignment_cap as u64,
        });
    }
    let n = cfg.power_grid_points;
    let p_max = spec.system.p_max;
    let ratio = (1.0 / cfg.p_min_ratio).powf(1.0 / (n - 1) as f64);
    let grid: Vec<f64> = (0..n).map(|m| p_max * cfg.p_min_ratio * ratio.powi(m as i32)).map(|p| p.min(p_max)).collect();

    let jobs: Vec<(usize, usize)> = (0..widths.len())
        .flat_map(|w| (0..assignments.len()).map(move |a| (w, a)))
        .collect();
    let best = jobs
        .par_iter()
        .filter_map(|&(w, a)| {
            let b = &widths[w];
            let x = &assignments[a];
            grid_best(spec, x, b, &grid).map(|(rates, p)| (w, a, rates, p))
        })
        .map(|(w, a, rates, p)| {
            let obj = rates.iter().copied().fold(f64::INFINITY, f64::min);
            (obj, w, a, rates, p)
        })
        .reduce_with(|l, r| {
            // Larger objective wins; ties keep the earlier job for determinism.
            match l.0.total_cmp(&r.0) {
                std::cmp::Ordering::Less => r,
                std::cmp::Ordering::Greater => l,
                std::cmp::Ordering::Equal => {
                    if (l.1, l.2) <= (r.1, r.2) {
                        l
                    } else {
                        r
                    }
                }
            }
        });
    let Some((obj, w, a, rates, p)) = best else {
        return Err(Error::Infeasible {
            constraint: "rate_threshold".into(),
            detail: "no enumerated assignment and grid point meets the thresholds".into(),
        });
    };
    let b = widths[w].clone();
    let x = assignments[a].clone();
    let unit = spec.system.phi * ratio.log2();
    let grid_slack_bps = (0..d.users)
        .map(|i| {
            (0..d.aps)
                .flat_map(|j| (0..d.bands).map(move |s| (j, s)))
                .filter(|&(j, s)| x[d.idx(i, j, s)] > 0.5)
                .map(|(j, s)| spec.links.p_nb(i, j) * b[s] * unit)
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(OracleResult {
        objective_bps: obj,
        per_user_bps: rates,
        state: AllocationState { dims: d, x, p, b },
        assignments: assignments.len(),
        width_vectors: widths.len(),
        grid_slack_bps,
    })
}

/// Per-user best grid powers for assignment `x` at widths `b`.
fn grid_best(spec: &ProblemSpec, x: &[f64], b: &[f64], grid: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = spec.dims();
    let sys = &spec.system;
    let gains = spec.gains(b);
    let mut rates = vec![0.0; d.users];
    let mut p = vec![0.0; d.len()];
    for i in 0..d.users {
        let ks: Vec<usize> = (0..d.aps)
            .flat_map(|j| (0..d.bands).map(move |s| (j, s)))
            .map(|(j, s)| d.idx(i, j, s))
            .filter(|&k| x[k] > 0.5)
            .collect();
        if ks.iter().any(|&k| gains[k] < sys.l_thr) {
            return None;
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut idx = vec![0usize; ks.len()];
        loop {
            let mut spend = 0.0;
            let mut rate = 0.0;
            let mut ok = true;
            for (c, &k) in ks.iter().enumerate() {
                let (_, j, s) = d.triple(k);
                let pk = grid[idx[c]];
                let r = spec.rate(b[s], pk, gains[k]);
                if r < sys.r_thr {
                    ok = false;
                    break;
                }
                let w = spec.links.p_nb(i, j);
                spend += w * pk;
                rate += w * r;
            }
            if ok && spend <= sys.p_max * (1.0 + 1e-12) && best.as_ref().is_none_or(|(v, _)| rate > *v) {
                best = Some((rate, idx.clone()));
            }
            // Odometer increment.
            let mut c = 0;
            while c < idx.len() {
                idx[c] += 1;
                if idx[c] < grid.len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == idx.len() {
                break;
            }
        }
        let (r, choice) = best?;
        rates[i] = r;
        for (c, &k) in ks.iter().enumerate() {
            p[k] = grid[choice[c]];
        }
    }
    Some((rates, p))
}

/// Width vectors on a uniform grid that fill the usable bandwidth, with
/// every band in `[δ, B_max]`. The last band absorbs the remainder.
fn width_grid(spec: &ProblemSpec, points: usize) -> Result<Vec<Vec<f64>>> {
    if points < 2 {
        return Err(Error::InvalidInput("width grid needs at least two points".into()));
    }
    let s = spec.num_bands();
    let usable = spec.usable_bandwidth();
    let (lo, hi) = (spec.delta, spec.system.b_max.min(usable));
    let values: Vec<f64> = (0..points)
        .map(|m| lo + (hi - lo) * m as f64 / (points - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(s);
    fn rec(values: &[f64], s: usize, usable: f64, lo: f64, hi: f64, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == s {
            let last = usable - cur.iter().sum::<f64>();
            if last >= lo && last <= hi {
                let mut v = cur.clone();
                v.push(last);
                out.push(v);
            }
            return;
        }
        for &v in values {
            cur.push(v);
            rec(values, s, usable, lo, hi, cur, out);
            cur.pop();
        }
    }
    rec(&values, s, usable, lo, hi, &mut cur, &mut out);
    // The equal split is always a candidate.
    out.push(spec.esb_bandwidths());
    if out.len() == 1 && s > 1 {
        log::warn!("width grid has no interior point; only the equal split is searched");
    }
    Ok(out)
}
