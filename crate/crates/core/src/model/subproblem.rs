//! Convex subproblems solved inside each successive-approximation step.
//!
//! Two blocks are offered. With the sub-band widths fixed, assignment and
//! power are optimized jointly in the perspective variables `Q = x·P`, where
//! the per-link throughput `x·B·φ·log2(1 + a·Q/x)` is jointly concave and the
//! power floor and cap become linear in `(x, Q)`. With assignment and power
//! fixed, the widths are optimized through the logarithmic substitution
//! `B = ξ + ω·ln(ς Z)`.

use std::sync::Arc;

use crate::absorption::AbsorptionFit;
use crate::error::{Error, Result};
use crate::solver::barrier::{ConcaveConstraint, ConvexProblem, Row};
use crate::spectrum::{self, offset_weight, Substitution};
use crate::units::{POWER_UNIT_W, RATE_UNIT_BPS};

use super::{gain_center, ProblemSpec};

/// Which variables stay fixed in a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum FixedBlock {
    /// Widths fixed; assignment and powers are free.
    Bandwidths(Vec<f64>),
    /// Binary assignment and powers (W) fixed; widths are free.
    AssignmentPower { x: Vec<f64>, p: Vec<f64>, b: Vec<f64> },
}

/// Tuning of subproblem construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemOptions {
    /// Penalty factor on fractional assignments.
    pub lambda: f64,
    /// Weight of the sum of user throughputs added to the max-min objective
    /// (zero for the pure max-min problem).
    pub aggregate_weight: f64,
    /// Slack added to inequality rows and the unit upper bound on `x`, which
    /// keeps the interior non-empty when combinatorial structure pins rows.
    pub row_slack: f64,
    /// Largest change of any sub-band width in the bandwidth block, Hz.
    pub trust_radius: Option<f64>,
    /// When set, the bandwidth block maximizes the sum of user throughputs
    /// while holding every user at or above this level (rate units).
    pub level_floor: Option<f64>,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        Self {
            lambda: 200.0,
            aggregate_weight: 0.0,
            row_slack: 1e-7,
            trust_radius: None,
            level_floor: None,
        }
    }
}

/// Variable map of the assignment/power block.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentLayout {
    /// Index of the max-min epigraph variable.
    pub t: usize,
    /// Per-user throughput variables when an aggregate weight is used.
    pub user_vars: Vec<usize>,
    /// Flat `(i, j, s)` indices of the links allowed to carry traffic.
    pub cols: Vec<usize>,
    pub x_var: Vec<usize>,
    pub q_var: Vec<usize>,
    /// Power floor of each column, W.
    pub p_floor: Vec<f64>,
    /// SNR per unit power of each column, 1/(power unit).
    pub snr_coef: Vec<f64>,
}

/// Variable map of the bandwidth block.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthLayout {
    pub t: usize,
    pub user_vars: Vec<usize>,
    pub z_var: Vec<usize>,
    pub z_bounds: Vec<(f64, f64)>,
}

#[derive(Debug)]
pub enum Layout {
    Assignment(AssignmentLayout),
    Bandwidth(BandwidthLayout),
}

/// A concave maximization ready for the barrier solver, with the variable
/// map and a start point strictly inside its inequalities.
#[derive(Debug)]
pub struct ConvexSubproblem {
    pub problem: ConvexProblem<'static>,
    pub layout: Layout,
    pub start: Vec<f64>,
}

/// Builds the subproblem for the block left free by `fixed`.
pub fn build_subproblem(
    spec: &ProblemSpec,
    anchor_x: &[f64],
    fixed: &FixedBlock,
    opts: &SubproblemOptions,
) -> Result<ConvexSubproblem> {
    match fixed {
        FixedBlock::Bandwidths(b) => build_assignment_block(spec, anchor_x, b, opts),
        FixedBlock::AssignmentPower { x, p, b } => build_bandwidth_block(spec, x, p, b, opts),
    }
}

/// Links whose path gain and power floor admit traffic at widths `b`.
pub fn eligible_links(spec: &ProblemSpec, b: &[f64]) -> Vec<(usize, f64)> {
    let d = spec.dims();
    let gains = spec.gains(b);
    let sys = &spec.system;
    (0..d.len())
        .filter_map(|k| {
            let (_, _, s) = d.triple(k);
            if b[s] <= 0.0 || gains[k] < sys.l_thr {
                return None;
            }
            let floor = spec.power_floor(gains[k], b[s]);
            (floor < sys.p_max * (1.0 - 1e-9)).then_some((k, floor))
        })
        .collect()
}

fn build_assignment_block(
    spec: &ProblemSpec,
    anchor_x: &[f64],
    b: &[f64],
    opts: &SubproblemOptions,
) -> Result<ConvexSubproblem> {
    let d = spec.dims();
    let sys = &spec.system;
    if b.len() != d.bands || anchor_x.len() != d.len() {
        return Err(Error::InvalidInput("anchor or width vector has the wrong length".into()));
    }
    let gains = spec.gains(b);
    let elig = eligible_links(spec, b);
    check_coverage(spec, &elig, &gains, b)?;

    let n_users = d.users;
    let with_users = opts.aggregate_weight > 0.0;
    let t = 0;
    let user_vars: Vec<usize> = if with_users { (1..=n_users).collect() } else { Vec::new() };
    let base = 1 + user_vars.len();
    let nc = elig.len();
    let x_var: Vec<usize> = (0..nc).map(|c| base + 2 * c).collect();
    let q_var: Vec<usize> = (0..nc).map(|c| base + 2 * c + 1).collect();
    let n = base + 2 * nc;
    let mut prob = ConvexProblem::new(n);

    let p_max_u = sys.p_max / POWER_UNIT_W;
    let eps = opts.row_slack;
    let cols: Vec<usize> = elig.iter().map(|e| e.0).collect();
    let p_floor: Vec<f64> = elig.iter().map(|e| e.1).collect();
    let snr_coef: Vec<f64> = cols
        .iter()
        .map(|&k| {
            let (_, _, s) = d.triple(k);
            sys.link_budget() * gains[k] / b[s] * POWER_UNIT_W
        })
        .collect();

    // Objective.
    prob.c[t] = 1.0;
    for &u in &user_vars {
        prob.c[u] = opts.aggregate_weight;
    }
    for (c, &k) in cols.iter().enumerate() {
        prob.c[x_var[c]] = -opts.lambda * (1.0 - 2.0 * anchor_x[k]);
    }

    // Bounds.
    for c in 0..nc {
        prob.lower[x_var[c]] = 0.0;
        prob.upper[x_var[c]] = 1.0 + eps;
        prob.lower[q_var[c]] = 0.0;
    }

    // Group columns.
    let mut by_user = vec![Vec::new(); d.users];
    let mut by_band = vec![Vec::new(); d.bands];
    let mut by_link = vec![Vec::new(); d.users * d.aps];
    let mut by_ap = vec![Vec::new(); d.aps];
    for (c, &k) in cols.iter().enumerate() {
        let (i, j, s) = d.triple(k);
        by_user[i].push(c);
        by_band[s].push(c);
        by_link[i * d.aps + j].push(c);
        by_ap[j].push(c);
    }

    let n_mc = sys.mc_order as f64;
    for (i, cs) in by_user.iter().enumerate() {
        prob.add_eq(cs.iter().map(|&c| (x_var[c], 1.0)).collect(), n_mc);
        // Weighted power budget.
        let row: Row = cs
            .iter()
            .map(|&c| {
                let (_, j, _) = d.triple(cols[c]);
                (q_var[c], spec.links.p_nb(i, j))
            })
            .collect();
        prob.add_le(row, p_max_u * (1.0 + eps), format!("power_budget[user {i}]"));
    }
    for cs in &by_band {
        prob.add_eq(cs.iter().map(|&c| (x_var[c], 1.0)).collect(), 1.0);
    }
    for i in 0..d.users {
        let aps_used = (0..d.aps).filter(|&j| !by_link[i * d.aps + j].is_empty()).count();
        for j in 0..d.aps {
            let cs = &by_link[i * d.aps + j];
            if cs.is_empty() {
                continue;
            }
            let row: Row = cs.iter().map(|&c| (x_var[c], 1.0)).collect();
            if aps_used == sys.mc_order {
                prob.add_eq(row, 1.0);
            } else {
                prob.add_le(row, 1.0 + eps, format!("link_band_count[user {i}, ap {j}]"));
            }
        }
    }
    let caps_tight = d.aps * sys.ap_capacity == d.bands;
    for (j, cs) in by_ap.iter().enumerate() {
        if cs.is_empty() {
            continue;
        }
        let row: Row = cs.iter().map(|&c| (x_var[c], 1.0)).collect();
        if caps_tight {
            prob.add_eq(row, sys.ap_capacity as f64);
        } else if cs.len() as f64 > sys.ap_capacity as f64 {
            prob.add_le(row, sys.ap_capacity as f64 + eps, format!("ap_capacity[ap {j}]"));
        }
    }
    // Power floor and cap in perspective form.
    for c in 0..nc {
        let floor_u = p_floor[c] / POWER_UNIT_W;
        prob.add_le(vec![(x_var[c], floor_u), (q_var[c], -1.0)], 0.0, format!("rate_threshold[col {c}]"));
        prob.add_le(vec![(q_var[c], 1.0), (x_var[c], -p_max_u)], eps * p_max_u, format!("power_box[col {c}]"));
    }
    // Epigraph rows between the max-min level and user throughputs.
    for &u in &user_vars {
        prob.add_le(vec![(t, 1.0), (u, -1.0)], 0.0, "epigraph");
    }

    // Concave throughput constraints.
    let phi_scale = sys.phi / std::f64::consts::LN_2 / RATE_UNIT_BPS;
    for (i, cs) in by_user.iter().enumerate() {
        let level = if with_users { user_vars[i] } else { t };
        let mut support = vec![level];
        let mut terms = Vec::with_capacity(cs.len());
        for &c in cs {
            let (_, j, s) = d.triple(cols[c]);
            support.push(x_var[c]);
            support.push(q_var[c]);
            terms.push(PerspectiveTerm {
                coef: spec.links.p_nb(i, j) * b[s] * phi_scale,
                a: snr_coef[c],
            });
        }
        prob.concave.push(Box::new(PerspectiveRate { support, terms }));
    }

    // Start: small uniform assignment with mid-range powers.
    let per_user_max = by_user.iter().map(|c| c.len()).max().unwrap_or(1).max(1);
    let x0 = 0.5 / (per_user_max.max(d.bands).max(d.users * d.bands / d.aps.max(1)) as f64);
    let mut start = vec![0.0; n];
    for c in 0..nc {
        start[x_var[c]] = x0;
        let floor_u = p_floor[c] / POWER_UNIT_W;
        start[q_var[c]] = x0 * (floor_u + 0.5 * (p_max_u - floor_u).min(p_max_u / per_user_max as f64));
    }
    // Keep the budget strictly slack.
    for cs in &by_user {
        let used: f64 = cs
            .iter()
            .map(|&c| {
                let (i, j, _) = d.triple(cols[c]);
                spec.links.p_nb(i, j) * start[q_var[c]]
            })
            .sum();
        if used >= 0.5 * p_max_u {
            let shrink = 0.5 * p_max_u / used;
            for &c in cs {
                start[x_var[c]] *= shrink;
                start[q_var[c]] *= shrink;
            }
        }
    }
    let rates: Vec<f64> = prob
        .concave
        .iter()
        .map(|h| {
            let mut tmp = start.clone();
            tmp[h.support()[0]] = 0.0;
            h.value(&tmp).unwrap_or(0.0)
        })
        .collect();
    let lowest = rates.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    for (i, &u) in user_vars.iter().enumerate() {
        start[u] = rates[i] * 0.5;
    }
    start[t] = if with_users {
        user_vars.iter().map(|&u| start[u]).fold(f64::INFINITY, f64::min) * 0.5 - 1e-3
    } else {
        lowest * 0.5 - 1e-3
    };

    Ok(ConvexSubproblem {
        problem: prob,
        layout: Layout::Assignment(AssignmentLayout {
            t,
            user_vars,
            cols,
            x_var,
            q_var,
            p_floor,
            snr_coef,
        }),
        start,
    })
}

/// Reports the first structural reason no assignment can exist.
fn check_coverage(spec: &ProblemSpec, elig: &[(usize, f64)], gains: &[f64], b: &[f64]) -> Result<()> {
    let d = spec.dims();
    let sys = &spec.system;
    let mut band_has = vec![false; d.bands];
    let mut user_aps = vec![vec![false; d.aps]; d.users];
    for &(k, _) in elig {
        let (i, j, s) = d.triple(k);
        band_has[s] = true;
        user_aps[i][j] = true;
    }
    let blame = |i: usize| {
        // A gain miss anywhere for this user points at the path-gain rule.
        let any_gain = (0..d.aps).any(|j| (0..d.bands).any(|s| gains[d.idx(i, j, s)] >= sys.l_thr));
        if any_gain {
            "rate_threshold"
        } else {
            "path_gain"
        }
    };
    for (i, aps) in user_aps.iter().enumerate() {
        let count = aps.iter().filter(|&&a| a).count();
        if count < sys.mc_order {
            return Err(Error::Infeasible {
                constraint: blame(i).into(),
                detail: format!(
                    "user {i} can reach only {count} APs under the thresholds, needs {}",
                    sys.mc_order
                ),
            });
        }
    }
    if let Some(s) = band_has.iter().position(|&h| !h) {
        return Err(Error::Infeasible {
            constraint: "band_link_count".into(),
            detail: format!("no link can use sub-band {s} ({:.4e} Hz wide)", b[s]),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct PerspectiveTerm {
    /// Throughput scale `p_nb·B·φ/ln2` in rate units.
    coef: f64,
    a: f64,
}

/// `Σ coef·x·ln(1 + a·Q/x) − level ≥ 0` with support `[level, x0, Q0, x1, Q1, …]`.
struct PerspectiveRate {
    support: Vec<usize>,
    terms: Vec<PerspectiveTerm>,
}

impl ConcaveConstraint for PerspectiveRate {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn value(&self, v: &[f64]) -> Option<f64> {
        let mut acc = -v[self.support[0]];
        for (k, term) in self.terms.iter().enumerate() {
            let x = v[self.support[1 + 2 * k]];
            let q = v[self.support[2 + 2 * k]];
            if !(x > 0.0) || !(q >= 0.0) {
                return None;
            }
            acc += term.coef * x * (term.a * q / x).ln_1p();
        }
        Some(acc)
    }

    fn eval(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let m = self.support.len();
        hess.iter_mut().for_each(|h| *h = 0.0);
        grad[0] = -1.0;
        let mut acc = -v[self.support[0]];
        for (k, term) in self.terms.iter().enumerate() {
            let (ix, iq) = (1 + 2 * k, 2 + 2 * k);
            let x = v[self.support[ix]];
            let q = v[self.support[iq]];
            if !(x > 0.0) || !(q >= 0.0) {
                return None;
            }
            let y = term.a * q / x;
            let l = y.ln_1p();
            let op = 1.0 + y;
            acc += term.coef * x * l;
            grad[ix] = term.coef * (l - y / op);
            grad[iq] = term.coef * term.a / op;
            let den = x * op * op;
            hess[ix * m + ix] = -term.coef * y * y / den;
            hess[iq * m + iq] = -term.coef * term.a * term.a / den;
            let cross = term.coef * term.a * y / den;
            hess[ix * m + iq] = cross;
            hess[iq * m + ix] = cross;
        }
        Some(acc)
    }
}

/// Shared data for constraints written in the substituted width variables.
#[derive(Debug)]
pub struct WidthContext {
    pub fit: AbsorptionFit,
    /// Frequency of each band before width offsets, Hz.
    pub anchors: Vec<f64>,
    /// +1 when centers grow with earlier widths, −1 when they fall.
    pub dir: f64,
    pub sub: Substitution,
    /// Variable index of each `Z_s`.
    pub z_var: Vec<usize>,
    pub phi: f64,
}

/// Values and derivatives of one link's gain or rate with respect to
/// `Z_0..=Z_s`; Hessian is `(s+1) × (s+1)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivs {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl WidthContext {
    pub fn new(spec: &ProblemSpec, sub: Substitution, z_var: Vec<usize>) -> Self {
        let s = spec.num_bands();
        let order = spec.order();
        Self {
            fit: spec.fit,
            anchors: (0..s)
                .map(|k| spectrum::band_anchor(spec.frame.f_ref, spec.frame.b_tot, spec.frame.b_g, k, order))
                .collect(),
            dir: order.sign(),
            sub,
            z_var,
            phi: spec.system.phi,
        }
    }

    fn widths(&self, z: &[f64], s: usize) -> Option<Vec<f64>> {
        (0..=s)
            .map(|k| {
                let zk = z[k];
                (zk > 0.0).then(|| self.sub.xi + self.sub.omega * (self.sub.varsigma * zk).ln())
            })
            .collect()
    }

    /// Center of band `s` for widths `b` (only `b[..=s]` is read).
    pub fn center(&self, s: usize, b: &[f64]) -> f64 {
        self.anchors[s] + self.dir * (0..=s).map(|k| offset_weight(s, k) * b[k]).sum::<f64>()
    }

    /// Path-gain log `ln g` of band `s` at distance `d` for the `Z` vector
    /// `z` (indexed by band).
    pub fn log_gain(&self, z: &[f64], s: usize, d: f64) -> Option<Derivs> {
        let b = self.widths(z, s)?;
        let f = self.center(s, &b);
        if !(f > 0.0) {
            return None;
        }
        let g = gain_center(&self.fit, f, d);
        let (k1, k2) = (self.fit.dk_df(f), self.fit.d2k_df2(f));
        let h1 = -k1 * d - 2.0 / f;
        let h2 = -k2 * d + 2.0 / (f * f);
        let n = s + 1;
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for k in 0..n {
            let ak = offset_weight(s, k);
            let bp = self.sub.db_dz(z[k]);
            let bpp = self.sub.d2b_dz2(z[k]);
            grad[k] = self.dir * ak * h1 * bp;
            for l in 0..n {
                let al = offset_weight(s, l);
                hess[k * n + l] = ak * al * h2 * bp * self.sub.db_dz(z[l]);
            }
            hess[k * n + k] += self.dir * ak * h1 * bpp;
        }
        Some(Derivs {
            value: g.ln(),
            grad,
            hess,
        })
    }

    /// Rate of band `s` at distance `d` with `snr_budget = P·G_A·G_U/N0`, in
    /// rate units.
    pub fn rate(&self, z: &[f64], s: usize, d: f64, snr_budget: f64) -> Option<Derivs> {
        let b = self.widths(z, s)?;
        let bs = b[s];
        if !(bs > 0.0) {
            return None;
        }
        let f = self.center(s, &b);
        if !(f > 0.0) {
            return None;
        }
        let g = gain_center(&self.fit, f, d);
        let (k1, k2) = (self.fit.dk_df(f), self.fit.d2k_df2(f));
        let h1 = -k1 * d - 2.0 / f;
        let h2 = -k2 * d + 2.0 / (f * f);
        let c = snr_budget;
        let y = c * g / bs;
        let op = 1.0 + y;
        let scale = self.phi / std::f64::consts::LN_2 / RATE_UNIT_BPS;
        let value = scale * bs * y.ln_1p();
        let r_b = scale * (y.ln_1p() - y / op);
        let r_g = scale * c / op;
        let den = bs * op * op;
        let r_bb = -scale * y * y / den;
        let r_gg = -scale * c * c / den;
        let r_bg = scale * c * y / den;

        let n = s + 1;
        let a: Vec<f64> = (0..n).map(|k| offset_weight(s, k)).collect();
        let gk: Vec<f64> = a.iter().map(|&ak| g * self.dir * ak * h1).collect();
        let bp: Vec<f64> = (0..n).map(|k| self.sub.db_dz(z[k])).collect();
        let bpp: Vec<f64> = (0..n).map(|k| self.sub.d2b_dz2(z[k])).collect();
        let own = |k: usize| if k == s { 1.0 } else { 0.0 };
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        for k in 0..n {
            let rk = r_b * own(k) + r_g * gk[k];
            grad[k] = rk * bp[k];
            for l in 0..n {
                let gkl = g * a[k] * a[l] * (h1 * h1 + h2);
                let rkl = r_bb * own(k) * own(l)
                    + r_bg * (own(k) * gk[l] + own(l) * gk[k])
                    + r_gg * gk[k] * gk[l]
                    + r_g * gkl;
                hess[k * n + l] = rkl * bp[k] * bp[l];
            }
            hess[k * n + k] += rk * bpp[k];
        }
        Some(Derivs { value, grad, hess })
    }

    fn gather(&self, v: &[f64], upto: usize) -> Vec<f64> {
        (0..=upto).map(|k| v[self.z_var[k]]).collect()
    }
}

/// Active link seen from the bandwidth block.
#[derive(Debug, Clone, Copy)]
pub struct ActiveLink {
    pub band: usize,
    pub d: f64,
    pub p_nb: f64,
    /// `P·G_A·G_U/N0`, Hz.
    pub snr_budget: f64,
}

/// `Σ p_nb·R(Z) − level ≥ 0` for one user.
struct WidthUserRate {
    ctx: Arc<WidthContext>,
    links: Vec<ActiveLink>,
    support: Vec<usize>,
    top: usize,
}

impl ConcaveConstraint for WidthUserRate {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn value(&self, v: &[f64]) -> Option<f64> {
        let z = self.ctx.gather(v, self.top);
        let mut acc = -v[self.support[0]];
        for l in &self.links {
            acc += l.p_nb * self.ctx.rate(&z, l.band, l.d, l.snr_budget)?.value;
        }
        Some(acc)
    }

    fn eval(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let z = self.ctx.gather(v, self.top);
        let m = self.support.len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        grad[0] = -1.0;
        let mut acc = -v[self.support[0]];
        for l in &self.links {
            let r = self.ctx.rate(&z, l.band, l.d, l.snr_budget)?;
            acc += l.p_nb * r.value;
            let n = l.band + 1;
            for k in 0..n {
                grad[1 + k] += l.p_nb * r.grad[k];
                for q in 0..n {
                    hess[(1 + k) * m + 1 + q] += l.p_nb * r.hess[k * n + q];
                }
            }
        }
        Some(acc)
    }
}

/// `R(Z) − floor ≥ 0` or `ln g(Z) − ln floor ≥ 0` for one active link.
struct WidthLinkFloor {
    ctx: Arc<WidthContext>,
    link: ActiveLink,
    floor: f64,
    log_gain: bool,
    support: Vec<usize>,
}

impl WidthLinkFloor {
    fn derivs(&self, v: &[f64]) -> Option<Derivs> {
        let z = self.ctx.gather(v, self.link.band);
        if self.log_gain {
            self.ctx.log_gain(&z, self.link.band, self.link.d)
        } else {
            self.ctx.rate(&z, self.link.band, self.link.d, self.link.snr_budget)
        }
    }
}

impl ConcaveConstraint for WidthLinkFloor {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn value(&self, v: &[f64]) -> Option<f64> {
        Some(self.derivs(v)?.value - self.floor)
    }

    fn eval(&self, v: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let r = self.derivs(v)?;
        grad.copy_from_slice(&r.grad);
        hess.copy_from_slice(&r.hess);
        Some(r.value - self.floor)
    }
}

/// Relative tolerance applied to rate and gain floors in the bandwidth block,
/// so that a start sitting exactly on a floor is still strictly inside.
pub const FLOOR_RELIEF: f64 = 1e-6;

fn build_bandwidth_block(
    spec: &ProblemSpec,
    x: &[f64],
    p: &[f64],
    b: &[f64],
    opts: &SubproblemOptions,
) -> Result<ConvexSubproblem> {
    let d = spec.dims();
    let sys = &spec.system;
    if !spec.mode.is_adaptive() {
        return Err(Error::ModeMismatch("bandwidth block needs an adaptive mode".into()));
    }
    if x.len() != d.len() || p.len() != d.len() || b.len() != d.bands {
        return Err(Error::InvalidInput("state vectors have the wrong length".into()));
    }
    let sub = spec.substitution;
    let with_users = opts.aggregate_weight > 0.0 || opts.level_floor.is_some();
    let t = 0;
    let user_vars: Vec<usize> = if with_users { (1..=d.users).collect() } else { Vec::new() };
    let base = 1 + user_vars.len();
    let z_var: Vec<usize> = (0..d.bands).map(|s| base + s).collect();
    let n = base + d.bands;
    let mut prob = ConvexProblem::new(n);
    let ctx = Arc::new(WidthContext::new(spec, sub, z_var.clone()));

    let (z_lo, z_hi) = (sub.z_min(spec.delta), sub.z_max(sys.b_max));
    let span = sys.b_max - spec.delta;
    let mut start = vec![0.0; n];
    let mut b_start = Vec::with_capacity(d.bands);
    let mut z_bounds = Vec::with_capacity(d.bands);
    for s in 0..d.bands {
        let bs = b[s].clamp(spec.delta + 1e-6 * span, sys.b_max - 1e-6 * span);
        b_start.push(bs);
        let z0 = sub.z_from_b(bs);
        start[z_var[s]] = z0;
        // A width radius r is the multiplicative band exp(±r/ω) in Z.
        let (lo, hi) = match opts.trust_radius {
            Some(r) => (z_lo.max(z0 * (-r / sub.omega).exp()), z_hi.min(z0 * (r / sub.omega).exp())),
            None => (z_lo, z_hi),
        };
        prob.lower[z_var[s]] = lo;
        prob.upper[z_var[s]] = hi;
        z_bounds.push((lo, hi));
    }
    // Tangent of Σ B_s(Z) at the start, held at the usable bandwidth.
    let target = spec.usable_bandwidth() - b_start.iter().sum::<f64>();
    let row: Row = (0..d.bands).map(|s| (z_var[s], sub.omega / start[z_var[s]])).collect();
    let rhs = target + row.iter().map(|&(i, c)| c * start[i]).sum::<f64>();
    prob.add_eq(row, rhs);

    prob.c[t] = if opts.level_floor.is_some() { 0.0 } else { 1.0 };
    let user_weight = if opts.level_floor.is_some() { 1.0 } else { opts.aggregate_weight };
    for &u in &user_vars {
        prob.c[u] = user_weight;
        prob.add_le(vec![(t, 1.0), (u, -1.0)], 0.0, "epigraph");
    }


    let budget = sys.link_budget();
    let mut per_user: Vec<Vec<ActiveLink>> = vec![Vec::new(); d.users];
    for k in 0..d.len() {
        if x[k] > 0.5 {
            let (i, j, s) = d.triple(k);
            per_user[i].push(ActiveLink {
                band: s,
                d: spec.links.d(i, j),
                p_nb: spec.links.p_nb(i, j),
                snr_budget: p[k] * budget,
            });
        }
    }
    let z_support = |top: usize| (0..=top).map(|k| z_var[k]).collect::<Vec<_>>();
    for (i, links) in per_user.iter().enumerate() {
        let top = links.iter().map(|l| l.band).max().unwrap_or(0);
        let level = if with_users { user_vars[i] } else { t };
        let mut support = vec![level];
        support.extend(z_support(top));
        prob.concave.push(Box::new(WidthUserRate {
            ctx: ctx.clone(),
            links: links.clone(),
            support,
            top,
        }));
        for l in links {
            if sys.r_thr > 0.0 {
                prob.concave.push(Box::new(WidthLinkFloor {
                    ctx: ctx.clone(),
                    link: *l,
                    floor: sys.r_thr * (1.0 - FLOOR_RELIEF) / RATE_UNIT_BPS,
                    log_gain: false,
                    support: z_support(l.band),
                }));
            }
            if sys.l_thr > 0.0 {
                prob.concave.push(Box::new(WidthLinkFloor {
                    ctx: ctx.clone(),
                    link: *l,
                    floor: (sys.l_thr * (1.0 - FLOOR_RELIEF)).ln(),
                    log_gain: true,
                    support: z_support(l.band),
                }));
            }
        }
    }

    // Start levels strictly below the user throughputs.
    let mut rates = Vec::with_capacity(d.users);
    for links in per_user.iter() {
        let z: Vec<f64> = (0..d.bands).map(|s| start[z_var[s]]).collect();
        let mut r = 0.0;
        for l in links {
            r += l.p_nb * ctx.rate(&z, l.band, l.d, l.snr_budget).map(|v| v.value).unwrap_or(0.0);
        }
        rates.push(r);
    }
    let lowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    // Levels strictly ordered: floor < t < u_i < R_i.
    let (t_gap, u_gap) = match opts.level_floor {
        Some(floor) => {
            // The floor never cuts off the start itself.
            let floor = floor.min(lowest * (1.0 - 1e-6));
            prob.lower[t] = floor;
            let room = lowest - floor;
            (0.5 * room, 0.25 * room)
        }
        None => (lowest.abs() * 2e-3 + 2e-6, lowest.abs() * 1e-3 + 1e-6),
    };
    for (i, &u) in user_vars.iter().enumerate() {
        start[u] = rates[i] - u_gap;
    }
    start[t] = lowest - t_gap;

    Ok(ConvexSubproblem {
        problem: prob,
        layout: Layout::Bandwidth(BandwidthLayout {
            t,
            user_vars,
            z_var,
            z_bounds,
        }),
        start,
    })
}
