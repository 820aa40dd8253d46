//! Local search over binary assignments at fixed widths.
//!
//! Moves keep every combinatorial constraint intact: exchanging the bands or
//! the APs of two links of different users, rotating the bands of three
//! links, and moving one link to another AP on the same band.
//! Powers follow from water-filling, and candidates are ranked by the
//! minimum user throughput with the sum as tie-break, so a move never
//! lowers the max-min objective.

use std::cmp::Ordering;

use super::min_of;
use super::waterfill::{waterfill, PowerTerm};
use crate::model::ProblemSpec;

/// Relative tolerance when comparing throughputs.
pub const COMPARE_TOL: f64 = 1e-9;

/// Upper bound on improving moves taken.
pub const MAX_MOVES: usize = 10_000;

/// Throughput of user `i` over links `(j, s)` at widths `b` with optimal
/// powers, or `None` when its constraints cannot be met.
pub(crate) fn user_rate(spec: &ProblemSpec, gains: &[f64], b: &[f64], i: usize, links: &[(usize, usize)]) -> Option<f64> {
    let d = spec.dims();
    let sys = &spec.system;
    let unit = sys.phi / std::f64::consts::LN_2;
    let mut terms = Vec::with_capacity(links.len());
    for &(j, s) in links {
        let g = gains[d.idx(i, j, s)];
        if g < sys.l_thr || !(b[s] > 0.0) {
            return None;
        }
        terms.push(PowerTerm {
            weight: spec.links.p_nb(i, j),
            scale: b[s] * unit,
            snr_per_watt: sys.link_budget() * g / b[s],
            floor: spec.power_floor(g, b[s]),
            cap: sys.p_max,
        });
    }
    let p = waterfill(&terms, sys.p_max).ok()?;
    Some(
        terms
            .iter()
            .zip(&p)
            .map(|(t, p)| t.weight * t.scale * (t.snr_per_watt * p).ln_1p())
            .sum(),
    )
}

/// Lexicographic comparison of throughput vectors: minimum first (relative
/// tolerance [`COMPARE_TOL`]), then the sum.
pub fn score_cmp(a: &[f64], b: &[f64]) -> Ordering {
    score_cmp_tol(a, b, COMPARE_TOL)
}

/// [`score_cmp`] with relative tolerance `tol` on both levels.
pub fn score_cmp_tol(a: &[f64], b: &[f64], tol: f64) -> Ordering {
    parts_cmp((min_of(a), a.iter().sum()), (min_of(b), b.iter().sum()), tol)
}

/// Compares `(minimum, sum)` pairs lexicographically with relative tolerance.
fn parts_cmp((ma, sa): (f64, f64), (mb, sb): (f64, f64), tol: f64) -> Ordering {
    let t = tol * ma.abs().max(mb.abs());
    if ma > mb + t {
        return Ordering::Greater;
    }
    if mb > ma + t {
        return Ordering::Less;
    }
    let t = tol * sa.abs().max(sb.abs());
    if sa > sb + t {
        Ordering::Greater
    } else if sb > sa + t {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

/// Rates of a candidate and its per-user `(ap, band)` links.
type Candidate = (Vec<f64>, Vec<Vec<(usize, usize)>>);

/// Improves binary `x` at widths `b` until no move helps. Returns the number
/// of moves taken. `x` must be feasible on entry.
pub fn improve_assignment(spec: &ProblemSpec, x: &mut [f64], b: &[f64]) -> usize {
    improve_assignment_capped(spec, x, b, f64::INFINITY)
}

/// [`improve_assignment`] with the minimum counted only up to `level`
/// (bit/s): once every user reaches it, moves raise the sum while keeping
/// every user at or above it.
pub fn improve_assignment_capped(spec: &ProblemSpec, x: &mut [f64], b: &[f64], level: f64) -> usize {
    let d = spec.dims();
    let sys = &spec.system;
    let gains = spec.gains(b);
    // Active links per user as (j, s).
    let mut links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); d.users];
    for k in 0..d.len() {
        if x[k] > 0.5 {
            let (i, j, s) = d.triple(k);
            links[i].push((j, s));
        }
    }
    let mut rates: Vec<f64> = match (0..d.users)
        .map(|i| user_rate(spec, &gains, b, i, &links[i]))
        .collect::<Option<Vec<_>>>()
    {
        Some(r) => r,
        None => return 0,
    };
    let mut ap_load = vec![0usize; d.aps];
    for l in &links {
        for &(j, _) in l {
            ap_load[j] += 1;
        }
    }

    let mut moves = 0;
    while moves < MAX_MOVES {
        let mut best: Option<Candidate> = None;
        let better = |cand: &[f64], best: &Option<Candidate>, cur: &[f64]| {
            let reference = best.as_ref().map_or(cur, |b| b.0.as_slice());
            let parts = |r: &[f64]| (min_of(r).min(level), r.iter().sum::<f64>());
            parts_cmp(parts(cand), parts(reference), COMPARE_TOL) == Ordering::Greater
        };
        // Band exchanges between links of two different users.
        for i1 in 0..d.users {
            for i2 in i1 + 1..d.users {
                for a in 0..links[i1].len() {
                    for c in 0..links[i2].len() {
                        let (j1, s1) = links[i1][a];
                        let (j2, s2) = links[i2][c];
                        let mut l1 = links[i1].clone();
                        let mut l2 = links[i2].clone();
                        l1[a] = (j1, s2);
                        l2[c] = (j2, s1);
                        let (Some(r1), Some(r2)) = (
                            user_rate(spec, &gains, b, i1, &l1),
                            user_rate(spec, &gains, b, i2, &l2),
                        ) else {
                            continue;
                        };
                        let mut cand = rates.clone();
                        cand[i1] = r1;
                        cand[i2] = r2;
                        if better(&cand, &best, &rates) {
                            let mut nl = links.clone();
                            nl[i1] = l1;
                            nl[i2] = l2;
                            best = Some((cand, nl));
                        }
                    }
                }
            }
        }
        // Exchanging the APs of links of two different users, bands kept.
        for i1 in 0..d.users {
            for i2 in i1 + 1..d.users {
                for a in 0..links[i1].len() {
                    for c in 0..links[i2].len() {
                        let (j1, s1) = links[i1][a];
                        let (j2, s2) = links[i2][c];
                        if j1 == j2
                            || links[i1].iter().any(|&(jj, _)| jj == j2)
                            || links[i2].iter().any(|&(jj, _)| jj == j1)
                        {
                            continue;
                        }
                        let mut l1 = links[i1].clone();
                        let mut l2 = links[i2].clone();
                        l1[a] = (j2, s1);
                        l2[c] = (j1, s2);
                        let (Some(r1), Some(r2)) = (
                            user_rate(spec, &gains, b, i1, &l1),
                            user_rate(spec, &gains, b, i2, &l2),
                        ) else {
                            continue;
                        };
                        let mut cand = rates.clone();
                        cand[i1] = r1;
                        cand[i2] = r2;
                        if better(&cand, &best, &rates) {
                            let mut nl = links.clone();
                            nl[i1] = l1;
                            nl[i2] = l2;
                            best = Some((cand, nl));
                        }
                    }
                }
            }
        }
        // Rotating the bands of links of three different users.
        let flat: Vec<(usize, usize)> = (0..d.users)
            .flat_map(|i| (0..links[i].len()).map(move |a| (i, a)))
            .collect();
        for (n1, &(i1, a1)) in flat.iter().enumerate() {
            for (n2, &(i2, a2)) in flat.iter().enumerate().skip(n1 + 1) {
                if i2 == i1 {
                    continue;
                }
                for &(i3, a3) in flat.iter().skip(n2 + 1) {
                    if i3 == i1 || i3 == i2 {
                        continue;
                    }
                    let (s1, s2, s3) = (links[i1][a1].1, links[i2][a2].1, links[i3][a3].1);
                    // Both directions of the cycle.
                    for (t1, t2, t3) in [(s2, s3, s1), (s3, s1, s2)] {
                        let (mut l1, mut l2, mut l3) = (links[i1].clone(), links[i2].clone(), links[i3].clone());
                        l1[a1].1 = t1;
                        l2[a2].1 = t2;
                        l3[a3].1 = t3;
                        let (Some(r1), Some(r2), Some(r3)) = (
                            user_rate(spec, &gains, b, i1, &l1),
                            user_rate(spec, &gains, b, i2, &l2),
                            user_rate(spec, &gains, b, i3, &l3),
                        ) else {
                            continue;
                        };
                        let mut cand = rates.clone();
                        cand[i1] = r1;
                        cand[i2] = r2;
                        cand[i3] = r3;
                        if better(&cand, &best, &rates) {
                            let mut nl = links.clone();
                            nl[i1] = l1;
                            nl[i2] = l2;
                            nl[i3] = l3;
                            best = Some((cand, nl));
                        }
                    }
                }
            }
        }
        // Moving a link to another AP on the same band.
        for i in 0..d.users {
            for a in 0..links[i].len() {
                let (j, s) = links[i][a];
                for j2 in 0..d.aps {
                    if j2 == j || ap_load[j2] >= sys.ap_capacity || links[i].iter().any(|&(jj, _)| jj == j2) {
                        continue;
                    }
                    let mut l = links[i].clone();
                    l[a] = (j2, s);
                    let Some(r) = user_rate(spec, &gains, b, i, &l) else {
                        continue;
                    };
                    let mut cand = rates.clone();
                    cand[i] = r;
                    if better(&cand, &best, &rates) {
                        let mut nl = links.clone();
                        nl[i] = l;
                        best = Some((cand, nl));
                    }
                }
            }
        }
        let Some((r, nl)) = best else { break };
        rates = r;
        links = nl;
        ap_load.iter_mut().for_each(|v| *v = 0);
        for l in &links {
            for &(j, _) in l {
                ap_load[j] += 1;
            }
        }
        moves += 1;
    }
    if moves > 0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (i, l) in links.iter().enumerate() {
            for &(j, s) in l {
                x[d.idx(i, j, s)] = 1.0;
            }
        }
    }
    moves
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_minimum_trades_for_sum() {
        let capped = |r: &[f64]| (min_of(r).min(2.0), r.iter().sum::<f64>());
        assert_eq!(parts_cmp(capped(&[2.0, 9.0]), capped(&[3.0, 4.0]), COMPARE_TOL), Ordering::Greater);
        assert_eq!(parts_cmp(capped(&[1.9, 99.0]), capped(&[2.0, 4.0]), COMPARE_TOL), Ordering::Less);
    }

    #[test]
    fn minimum_first_then_sum() {
        assert_eq!(score_cmp(&[3.0, 1.0], &[2.0, 0.9]), Ordering::Greater);
        assert_eq!(score_cmp(&[1.0, 5.0], &[1.0, 4.0]), Ordering::Greater);
        assert_eq!(score_cmp(&[4.0, 1.0], &[1.0, 4.0]), Ordering::Equal);
        assert_eq!(score_cmp(&[0.5, 9.0], &[1.0, 1.0]), Ordering::Less);
    }
}
