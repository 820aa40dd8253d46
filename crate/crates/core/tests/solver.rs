//! Equal- and adaptive-width solver behavior.

mod common;

use proptest::prelude::*;
use thz_alloc::model::{constraint_residuals, Mode, ProblemSpec, SystemParams};
use thz_alloc::scenario::LinkTable;
use thz_alloc::solver::asb::compliance_for;
use thz_alloc::solver::esb::assignment_sca;
use thz_alloc::solver::{solve_asb, solve_esb, SolverConfig};
use thz_alloc::Error;

use common::{reference_spec, single_link_rate, spec_from_links, toy_spec};

/// Two-band toy with a cap loose enough for the widths to move.
fn toy_adaptive(seed: u64) -> ProblemSpec {
    let mut spec = toy_spec(seed, Mode::AsbPacsr);
    spec.system.b_max = 40e9;
    spec
}

const EXACT: [&str; 5] = ["mc_order", "link_band_count", "band_link_count", "ap_capacity", "binary"];

#[test]
fn single_link_reaches_closed_form() {
    let sys = SystemParams {
        mc_order: 1,
        ..Default::default()
    };
    let links = LinkTable::from_parts(1, 1, vec![3.0], vec![0.85], 1.7).unwrap();
    let spec = spec_from_links(links, sys, Mode::Esb);
    let r = solve_esb(&spec, &SolverConfig::default()).unwrap();
    let expect = single_link_rate(3.0, 0.85, &sys);
    assert!(
        (r.objective_bps - expect).abs() <= 1e-6 * expect,
        "{} vs {expect}",
        r.objective_bps
    );
    assert!(r.converged);
    assert_eq!(r.state.x, vec![1.0]);
}

#[test]
fn penalized_objective_never_decreases() {
    let spec = reference_spec(2, Mode::Esb);
    let cfg = SolverConfig::default();
    let b = spec.esb_bandwidths();
    let anchor = vec![0.5; spec.dims().len()];
    let out = assignment_sca(&spec, &b, &anchor, &cfg).unwrap();
    assert!(out.history.len() >= 2);
    for w in out.history.windows(2) {
        let (a, c) = (w[0].penalized_objective, w[1].penalized_objective);
        assert!(c >= a - 1e-6 * a.abs().max(1.0), "iteration {}: {a} -> {c}", w[1].iter);
    }
}

#[test]
fn solves_are_deterministic() {
    let spec = toy_adaptive(4);
    let cfg = SolverConfig::default();
    let a = solve_asb(&spec, &cfg).unwrap();
    let b = solve_asb(&spec, &cfg).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.objective_bps.to_bits(), b.objective_bps.to_bits());
    assert_eq!(a.history, b.history);
}

#[test]
fn wrong_mode_is_rejected() {
    let cfg = SolverConfig::default();
    assert!(matches!(
        solve_asb(&toy_spec(1, Mode::Esb), &cfg),
        Err(Error::ModeMismatch(_))
    ));
    assert!(matches!(
        solve_esb(&toy_adaptive(1), &cfg),
        Err(Error::ModeMismatch(_))
    ));
}

#[test]
fn adaptive_solve_reports_compliance() {
    let mut spec = toy_adaptive(2);
    spec.substitution.omega = 1e12;
    let c = compliance_for(&spec).unwrap();
    assert!(c.shrunk && c.compliant);
    assert!(c.omega_used < c.omega_requested);
    let r = solve_asb(&spec, &SolverConfig::default()).unwrap();
    assert_eq!(r.compliance.unwrap().omega_used, c.omega_used);
    let total: f64 = r.state.b.iter().sum();
    assert!((total - spec.usable_bandwidth()).abs() <= 1e-6 * total);
    assert!(r.state.b.iter().all(|&b| b >= spec.delta && b <= spec.system.b_max * (1.0 + 1e-9)));
}

#[test]
fn adaptive_never_loses_to_equal_width() {
    let cfg = SolverConfig::default();
    for seed in [3, 6] {
        let e = solve_esb(&toy_spec(seed, Mode::Esb), &cfg).unwrap();
        let a = solve_asb(&toy_adaptive(seed), &cfg).unwrap();
        assert!(a.objective_bps >= e.objective_bps * (1.0 - 1e-9));
        assert!(a.aggregate_bps >= e.aggregate_bps * (1.0 - 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn rounded_solutions_are_feasible(seed in 0u64..10_000) {
        let spec = toy_spec(seed, Mode::Esb);
        match solve_esb(&spec, &SolverConfig::default()) {
            Ok(r) => {
                let res = constraint_residuals(&r.state, &spec);
                for (name, v) in &res.0 {
                    if EXACT.contains(&name.as_str()) {
                        prop_assert!(v.abs <= 0.0, "{name}: {v:?}");
                    } else {
                        prop_assert!(v.rel <= 1e-6, "{name}: {v:?}");
                    }
                }
                let min = r.per_user_bps.iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(min, r.objective_bps);
            }
            Err(e) => prop_assert!(matches!(e, Error::Infeasible { .. }), "{e}"),
        }
    }
}
