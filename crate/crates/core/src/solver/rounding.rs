//! Rounding a nearly binary assignment to a binary one that satisfies the
//! combinatorial constraints.
//!
//! Greedy pass first: links are taken in decreasing order of their relaxed
//! value whenever the band is free, the user needs more links, the user-AP
//! pair is unused and the AP has room. If that leaves a band empty, a
//! depth-first search over bands (most decided first) explores alternatives
//! in the same preference order.

use crate::error::{Error, Result};
use crate::model::Dims;

/// Combinatorial limits for one rounding.
#[derive(Debug, Clone)]
pub struct RoundingRules<'a> {
    pub dims: Dims,
    pub mc_order: usize,
    pub ap_capacity: usize,
    /// Whether link `k` may carry traffic at all.
    pub allowed: &'a [bool],
    /// Budget spent by link `k` at its power floor, and the per-user budget.
    /// Partial assignments over budget are pruned.
    pub floor_cost: Option<(&'a [f64], f64)>,
}

/// Cap on depth-first nodes before giving up.
pub const SEARCH_NODE_CAP: usize = 2_000_000;

struct Counts {
    band: Vec<bool>,
    user: Vec<usize>,
    pair: Vec<bool>,
    ap: Vec<usize>,
    spend: Vec<f64>,
}

impl Counts {
    fn new(d: Dims) -> Self {
        Self {
            band: vec![false; d.bands],
            user: vec![0; d.users],
            pair: vec![false; d.users * d.aps],
            ap: vec![0; d.aps],
            spend: vec![0.0; d.users],
        }
    }

    fn fits(&self, r: &RoundingRules, k: usize) -> bool {
        let d = r.dims;
        let (i, j, s) = d.triple(k);
        r.allowed[k]
            && !self.band[s]
            && self.user[i] < r.mc_order
            && !self.pair[i * d.aps + j]
            && self.ap[j] < r.ap_capacity
            && r.floor_cost.is_none_or(|(cost, budget)| self.spend[i] + cost[k] <= budget)
    }

    fn set(&mut self, r: &RoundingRules, k: usize, on: bool) {
        let d = r.dims;
        let (i, j, s) = d.triple(k);
        self.band[s] = on;
        self.pair[i * d.aps + j] = on;
        let c = r.floor_cost.map_or(0.0, |(cost, _)| cost[k]);
        if on {
            self.user[i] += 1;
            self.ap[j] += 1;
            self.spend[i] += c;
        } else {
            self.user[i] -= 1;
            self.ap[j] -= 1;
            self.spend[i] -= c;
        }
    }
}

/// Rounds `x` to a binary assignment. `accept` is consulted on each
/// complete candidate (for example to check power feasibility); the first
/// accepted candidate in preference order is returned.
pub fn round_assignment(
    x: &[f64],
    rules: &RoundingRules,
    accept: &mut dyn FnMut(&[f64]) -> bool,
) -> Result<Vec<f64>> {
    let d = rules.dims;
    if x.len() != d.len() || rules.allowed.len() != d.len() {
        return Err(Error::InvalidInput("assignment has the wrong length".into()));
    }
    // Greedy pass; ties broken by the smallest flat index.
    let mut order: Vec<usize> = (0..d.len()).filter(|&k| rules.allowed[k]).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut counts = Counts::new(d);
    let mut out = vec![0.0; d.len()];
    for &k in &order {
        if counts.fits(rules, k) {
            counts.set(rules, k, true);
            out[k] = 1.0;
        }
    }
    if complete(&counts, rules) && accept(&out) {
        return Ok(out);
    }

    // Depth-first search band by band, most decided band first.
    let mut bands: Vec<usize> = (0..d.bands).collect();
    let best_in = |s: usize| {
        (0..d.users * d.aps)
            .map(|ij| x[ij * d.bands + s])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    bands.sort_by(|&a, &b| best_in(b).total_cmp(&best_in(a)).then(a.cmp(&b)));
    let candidates: Vec<Vec<usize>> = bands
        .iter()
        .map(|&s| {
            let mut c: Vec<usize> = (0..d.users * d.aps)
                .map(|ij| ij * d.bands + s)
                .filter(|&k| rules.allowed[k])
                .collect();
            c.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
            c
        })
        .collect();
    let mut counts = Counts::new(d);
    let mut out = vec![0.0; d.len()];
    let mut nodes = 0usize;
    match dfs(0, &candidates, rules, &mut counts, &mut out, &mut nodes, accept) {
        Search::Found => Ok(out),
        Search::Exhausted => Err(Error::Infeasible {
            constraint: "band_link_count".into(),
            detail: "no binary assignment satisfies the association limits and thresholds".into(),
        }),
        Search::Capped => Err(Error::CapExceeded {
            count: nodes as u128,
            cap: SEARCH_NODE_CAP as u64,
        }),
    }
}

enum Search {
    Found,
    Exhausted,
    Capped,
}

fn complete(c: &Counts, r: &RoundingRules) -> bool {
    c.band.iter().all(|&b| b) && c.user.iter().all(|&u| u == r.mc_order)
}

fn dfs(
    depth: usize,
    cands: &[Vec<usize>],
    rules: &RoundingRules,
    counts: &mut Counts,
    out: &mut [f64],
    nodes: &mut usize,
    accept: &mut dyn FnMut(&[f64]) -> bool,
) -> Search {
    if depth == cands.len() {
        return if complete(counts, rules) && accept(out) {
            Search::Found
        } else {
            Search::Exhausted
        };
    }
    // Prune when the remaining bands cannot cover the users' shortfall.
    let remaining = cands.len() - depth;
    let missing: usize = counts.user.iter().map(|&u| rules.mc_order - u).sum();
    if missing != remaining {
        return Search::Exhausted;
    }
    if !coverable(depth, cands, rules, counts) {
        return Search::Exhausted;
    }
    for &k in &cands[depth] {
        *nodes += 1;
        if *nodes > SEARCH_NODE_CAP {
            return Search::Capped;
        }
        if !counts.fits(rules, k) {
            continue;
        }
        counts.set(rules, k, true);
        out[k] = 1.0;
        match dfs(depth + 1, cands, rules, counts, out, nodes, accept) {
            Search::Exhausted => {}
            other => return other,
        }
        counts.set(rules, k, false);
        out[k] = 0.0;
    }
    Search::Exhausted
}

/// Forward check: every remaining band has a link that still fits, every
/// user can still collect its missing links from the remaining bands, and
/// the association limits leave room for all of them.
fn coverable(depth: usize, cands: &[Vec<usize>], rules: &RoundingRules, counts: &Counts) -> bool {
    let d = rules.dims;
    let mut reach = vec![0usize; d.users];
    let mut seen = vec![false; d.users];
    for band in &cands[depth..] {
        seen.iter_mut().for_each(|v| *v = false);
        let mut any = false;
        for &k in band {
            if counts.fits(rules, k) {
                any = true;
                let (i, _, _) = d.triple(k);
                if !seen[i] {
                    seen[i] = true;
                    reach[i] += 1;
                }
            }
        }
        if !any {
            return false;
        }
    }
    if !(0..d.users).all(|i| reach[i] >= rules.mc_order - counts.user[i]) {
        return false;
    }
    associable(depth, cands, rules, counts)
}

/// Whether the users' missing links can be spread over distinct unused APs
/// within the remaining AP capacity, by max flow from users to APs.
fn associable(depth: usize, cands: &[Vec<usize>], rules: &RoundingRules, counts: &Counts) -> bool {
    let d = rules.dims;
    let (src, sink) = (d.users + d.aps, d.users + d.aps + 1);
    let n = sink + 1;
    let mut cap = vec![0usize; n * n];
    let mut demand = 0;
    for i in 0..d.users {
        let need = rules.mc_order - counts.user[i];
        cap[src * n + i] = need;
        demand += need;
    }
    for j in 0..d.aps {
        cap[(d.users + j) * n + sink] = rules.ap_capacity.saturating_sub(counts.ap[j]);
    }
    for band in &cands[depth..] {
        for &k in band {
            let (i, j, _) = d.triple(k);
            if counts.fits(rules, k) {
                cap[i * n + d.users + j] = 1;
            }
        }
    }
    let mut flow = 0;
    let mut prev = vec![usize::MAX; n];
    loop {
        prev.iter_mut().for_each(|v| *v = usize::MAX);
        prev[src] = src;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u * n + v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[sink] == usize::MAX {
            break;
        }
        let mut v = sink;
        while v != src {
            let u = prev[v];
            cap[u * n + v] -= 1;
            cap[v * n + u] += 1;
            v = u;
        }
        flow += 1;
    }
    flow == demand
}

/// Enumerates every binary assignment satisfying the association limits, in
/// band-major lexicographic order, stopping after `cap` assignments.
pub fn enumerate_assignments(rules: &RoundingRules, cap: usize, visit: &mut dyn FnMut(&[f64])) -> Result<usize> {
    let d = rules.dims;
    let cands: Vec<Vec<usize>> = (0..d.bands)
        .map(|s| {
            (0..d.users * d.aps)
                .map(|ij| ij * d.bands + s)
                .filter(|&k| rules.allowed[k])
                .collect()
        })
        .collect();
    let mut counts = Counts::new(d);
    let mut out = vec![0.0; d.len()];
    let mut found = 0usize;
    let mut over = false;
    let mut accept = |x: &[f64]| {
        found += 1;
        if found > cap {
            over = true;
            return true;
        }
        visit(x);
        false
    };
    let mut nodes = 0usize;
    let _ = dfs(0, &cands, rules, &mut counts, &mut out, &mut nodes, &mut accept);
    if over || nodes > SEARCH_NODE_CAP {
        return Err(Error::CapExceeded {
            count: found as u128,
            cap: cap as u64,
        });
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(users: usize, aps: usize, n: usize) -> Dims {
        Dims {
            users,
            aps,
            bands: users * n,
        }
    }

    fn check(x: &[f64], r: &RoundingRules) {
        let d = r.dims;
        for s in 0..d.bands {
            let c: f64 = (0..d.users * d.aps).map(|ij| x[ij * d.bands + s]).sum();
            assert_eq!(c, 1.0);
        }
        for i in 0..d.users {
            let mut total = 0.0;
            for j in 0..d.aps {
                let c: f64 = (0..d.bands).map(|s| x[d.idx(i, j, s)]).sum();
                assert!(c <= 1.0);
                total += c;
            }
            assert_eq!(total, r.mc_order as f64);
        }
        for j in 0..d.aps {
            let c: f64 = (0..d.users).flat_map(|i| (0..d.bands).map(move |s| (i, s))).map(|(i, s)| x[d.idx(i, j, s)]).sum();
            assert!(c <= r.ap_capacity as f64);
        }
    }

    #[test]
    fn near_binary_input_rounds_to_itself() {
        let d = dims(2, 2, 1);
        let allowed = vec![true; d.len()];
        let rules = RoundingRules {
            dims: d,
            mc_order: 1,
            ap_capacity: 1,
            allowed: &allowed,
            floor_cost: None,
        };
        let mut x = vec![0.0; d.len()];
        x[d.idx(0, 1, 0)] = 0.999;
        x[d.idx(1, 0, 1)] = 0.998;
        x[d.idx(0, 0, 1)] = 0.001;
        let r = round_assignment(&x, &rules, &mut |_| true).unwrap();
        assert_eq!(r[d.idx(0, 1, 0)], 1.0);
        assert_eq!(r[d.idx(1, 0, 1)], 1.0);
        check(&r, &rules);
    }

    #[test]
    fn over_budget_links_are_pruned() {
        // User 0 prefers band 0 on AP 0, but that link alone exceeds the budget.
        let d = dims(2, 2, 1);
        let allowed = vec![true; d.len()];
        let mut cost = vec![0.5; d.len()];
        cost[d.idx(0, 0, 0)] = 2.0;
        let rules = RoundingRules {
            dims: d,
            mc_order: 1,
            ap_capacity: 2,
            allowed: &allowed,
            floor_cost: Some((&cost, 1.0)),
        };
        let mut x = vec![0.1; d.len()];
        x[d.idx(0, 0, 0)] = 0.9;
        let mut calls = 0;
        let r = round_assignment(&x, &rules, &mut |_| {
            calls += 1;
            true
        })
        .unwrap();
        check(&r, &rules);
        assert_eq!(r[d.idx(0, 0, 0)], 0.0);
        assert_eq!(calls, 1);
    }

    #[test]
    fn crowded_aps_are_infeasible_without_search() {
        // Five users reach only APs 0 and 1, which hold three links each.
        let d = dims(5, 4, 2);
        let allowed: Vec<bool> = (0..d.len()).map(|k| d.triple(k).1 < 2).collect();
        let rules = RoundingRules {
            dims: d,
            mc_order: 2,
            ap_capacity: 3,
            allowed: &allowed,
            floor_cost: None,
        };
        let mut calls = 0;
        let r = round_assignment(&vec![0.5; d.len()], &rules, &mut |_| {
            calls += 1;
            true
        });
        assert!(matches!(r, Err(Error::Infeasible { .. })));
        assert_eq!(calls, 0);
    }

    #[test]
    fn greedy_conflict_is_repaired() {
        // The greedy favourite for both bands is user 0; user 1 must get one.
        let d = dims(2, 2, 1);
        let allowed = vec![true; d.len()];
        let rules = RoundingRules {
            dims: d,
            mc_order: 1,
            ap_capacity: 2,
            allowed: &allowed,
            floor_cost: None,
        };
        let mut x = vec![0.0; d.len()];
        x[d.idx(0, 0, 0)] = 0.6;
        x[d.idx(0, 1, 1)] = 0.55;
        x[d.idx(1, 0, 1)] = 0.4;
        let r = round_assignment(&x, &rules, &mut |_| true).unwrap();
        check(&r, &rules);
        assert_eq!(r[d.idx(0, 0, 0)], 1.0);
    }

    #[test]
    fn acceptance_callback_steers_search() {
        let d = dims(2, 2, 1);
        let allowed = vec![true; d.len()];
        let rules = RoundingRules {
            dims: d,
            mc_order: 1,
            ap_capacity: 1,
            allowed: &allowed,
            floor_cost: None,
        };
        let x = vec![0.5; d.len()];
        let banned = d.idx(0, 0, 0);
        let r = round_assignment(&x, &rules, &mut |c| c[banned] == 0.0).unwrap();
        assert_eq!(r[banned], 0.0);
        check(&r, &rules);
    }

    #[test]
    fn impossible_limits_are_infeasible() {
        let d = dims(2, 1, 1);
        let allowed = vec![true; d.len()];
        let rules = RoundingRules {
            dims: d,
            mc_order: 1,
            ap_capacity: 1,
            allowed: &allowed,
            floor_cost: None,
        };
        let x = vec![0.5; d.len()];
        assert!(matches!(
            round_assignment(&x, &rules, &mut |_| true),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn enumeration_counts_permutations() {
        // Two users, two APs, one link each, caps of one: each user takes a
        // distinct AP (2 ways) and a distinct band (2 ways).
        let d = dims(2, 2, 1);
        let allowed = vec![true; d.len()];
        let rules = RoundingRules {
            dims: d,
            mc_order: 1,
            ap_capacity: 1,
            allowed: &allowed,
            floor_cost: None,
        };
        let mut seen = Vec::new();
        let n = enumerate_assignments(&rules, 100, &mut |x| seen.push(x.to_vec())).unwrap();
        assert_eq!(n, 4);
        for x in &seen {
            check(x, &rules);
        }
        assert!(matches!(
            enumerate_assignments(&rules, 3, &mut |_| {}),
            Err(Error::CapExceeded { .. })
        ));
    }
}
