//! Power allocation at a fixed binary assignment and fixed widths.
//!
//! With `x` and `B` fixed every user's throughput depends only on its own
//! powers, so maximizing each user separately maximizes the minimum and the
//! sum at once. Per user the problem is
//! `max Σ w_k c_k ln(1 + a_k P_k)` s.t. `Σ w_k P_k ≤ P_max`,
//! `floor_k ≤ P_k ≤ cap_k`, whose solution is the weighted water level
//! `P_k = clip(c_k/μ − 1/a_k)`.

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// One active link of a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    /// Weight in both the throughput and the budget (non-blockage probability).
    pub weight: f64,
    /// Throughput scale `B·φ/ln 2`.
    pub scale: f64,
    /// SNR per watt.
    pub snr_per_watt: f64,
    /// Smallest admissible power, W.
    pub floor: f64,
    /// Largest admissible power, W.
    pub cap: f64,
}

/// Why a user's power problem has no solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerShortfall {
    /// A floor exceeds its cap (link index given).
    Floor(usize),
    /// The floors together exceed the budget.
    Budget,
}

fn level(t: &PowerTerm, mu: f64) -> f64 {
    (t.scale / mu - 1.0 / t.snr_per_watt).clamp(t.floor, t.cap)
}

/// Optimal powers for one user under budget `budget`.
pub fn waterfill(terms: &[PowerTerm], budget: f64) -> std::result::Result<Vec<f64>, PowerShortfall> {
    if let Some(k) = terms.iter().position(|t| t.floor > t.cap) {
        return Err(PowerShortfall::Floor(k));
    }
    let spend = |p: &[f64]| terms.iter().zip(p).map(|(t, p)| t.weight * p).sum::<f64>();
    let floors: Vec<f64> = terms.iter().map(|t| t.floor).collect();
    if spend(&floors) > budget {
        return Err(PowerShortfall::Budget);
    }
    let caps: Vec<f64> = terms.iter().map(|t| t.cap).collect();
    if spend(&caps) <= budget {
        return Ok(caps);
    }
    // Marginal utilities at the cap and the floor bracket the water level.
    let mut lo = terms
        .iter()
        .map(|t| t.scale * t.snr_per_watt / (1.0 + t.snr_per_watt * t.cap))
        .fold(f64::INFINITY, f64::min);
    let mut hi = terms
        .iter()
        .map(|t| t.scale * t.snr_per_watt / (1.0 + t.snr_per_watt * t.floor))
        .fold(0.0, f64::max);
    let total = |mu: f64| terms.iter().map(|t| t.weight * level(t, mu)).sum::<f64>();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` is on the feasible side.
    Ok(terms.iter().map(|t| level(t, hi)).collect())
}

/// Optimal powers (W) for every link of a binary assignment `x` at widths `b`.
pub fn optimize_powers(spec: &ProblemSpec, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let d = spec.dims();
    let sys = &spec.system;
    let gains = spec.gains(b);
    let scale_unit = sys.phi / std::f64::consts::LN_2;
    let mut p = vec![0.0; d.len()];
    for i in 0..d.users {
        let mut ks = Vec::new();
        let mut terms = Vec::new();
        for j in 0..d.aps {
            for s in 0..d.bands {
                let k = d.idx(i, j, s);
                if x[k] <= 0.5 {
                    continue;
                }
                if gains[k] < sys.l_thr {
                    return Err(Error::Infeasible {
                        constraint: "path_gain".into(),
                        detail: format!("link (user {i}, ap {j}, band {s}) has gain {:.3e}", gains[k]),
                    });
                }
                ks.push(k);
                terms.push(PowerTerm {
                    weight: spec.links.p_nb(i, j),
                    scale: b[s] * scale_unit,
                    snr_per_watt: sys.link_budget() * gains[k] / b[s],
                    floor: spec.power_floor(gains[k], b[s]),
                    cap: sys.p_max,
                });
            }
        }
        match waterfill(&terms, sys.p_max) {
            Ok(ps) => {
                for (k, v) in ks.into_iter().zip(ps) {
                    p[k] = v;
                }
            }
            Err(PowerShortfall::Floor(c)) => {
                let (_, j, s) = d.triple(ks[c]);
                return Err(Error::Infeasible {
                    constraint: "rate_threshold".into(),
                    detail: format!(
                        "link (user {i}, ap {j}, band {s}) needs {:.3e} W to reach the rate threshold",
                        terms[c].floor
                    ),
                });
            }
            Err(PowerShortfall::Budget) => {
                return Err(Error::Infeasible {
                    constraint: "power_budget".into(),
                    detail: format!("user {i} cannot meet its rate thresholds within the power budget"),
                });
            }
        }
    }
    Ok(p)
}
