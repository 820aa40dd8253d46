mod common;

use proptest::prelude::*;
use thz_alloc::baselines::{
    brute_force, damc, damc_assign, equal_power_equal_band, DamcConfig, DamcOrientation, OracleConfig,
};
use thz_alloc::model::{constraint_residuals, Mode, SystemParams};
use thz_alloc::scenario::{build_links, standard_deployment, BlockerModel, DeploymentConfig, LinkTable};
use thz_alloc::solver::{solve_esb, SolverConfig};
use thz_alloc::spectrum::esb_plan;
use thz_alloc::Error;

use common::{reference_spec, single_link_rate, spec_from_links, toy_spec};

fn two_band_plan() -> thz_alloc::spectrum::SpectrumPlan {
    esb_plan(1.075e12, 50e9, 0.75e9, 2).unwrap()
}

#[test]
fn long_link_gets_the_center_band() {
    let links = LinkTable::from_parts(2, 1, vec![20.0, 5.0], vec![0.9, 0.9], 1.7).unwrap();
    let plan = two_band_plan();
    let cfg = DamcConfig::default();
    let x = damc_assign(&links, &plan, 1, 2, &cfg).unwrap();
    let centers = plan.center_frequencies().unwrap();
    let central = if (centers[0] - cfg.tw_center).abs() < (centers[1] - cfg.tw_center).abs() { 0 } else { 1 };
    // Flat index (i, j, s) with one AP: i * 2 + s.
    assert_eq!(x[central], 1.0, "user 0 (20 m) should hold band {central}");
    assert_eq!(x[2 + (1 - central)], 1.0);

    let edge = damc_assign(
        &links,
        &plan,
        1,
        2,
        &DamcConfig {
            orientation: DamcOrientation::LongToEdge,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(edge[1 - central], 1.0);
}

#[test]
fn equal_distances_pair_lexicographically() {
    let links = LinkTable::from_parts(2, 1, vec![7.0, 7.0], vec![0.9, 0.9], 1.7).unwrap();
    let plan = two_band_plan();
    let cfg = DamcConfig::default();
    let x = damc_assign(&links, &plan, 1, 2, &cfg).unwrap();
    let centers = plan.center_frequencies().unwrap();
    let central = if (centers[0] - cfg.tw_center).abs() < (centers[1] - cfg.tw_center).abs() { 0 } else { 1 };
    assert_eq!(x[central], 1.0);
    assert_eq!(x[2 + (1 - central)], 1.0);
    assert_eq!(x, damc_assign(&links, &plan, 1, 2, &cfg).unwrap());
}

#[test]
fn association_beyond_ap_capacity_is_refused() {
    let links = LinkTable::from_parts(2, 1, vec![3.0, 4.0], vec![0.9, 0.9], 1.7).unwrap();
    let r = damc_assign(&links, &two_band_plan(), 1, 1, &DamcConfig::default());
    assert!(matches!(r, Err(Error::Infeasible { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn damc_output_is_a_valid_assignment(
        users in prop::collection::vec((0.0f64..20.0, 0.0f64..20.0), 2..7),
        mc in 1usize..3,
    ) {
        let dep = standard_deployment(&DeploymentConfig {
            num_users: users.len(),
            user_positions: Some(users.clone()),
            ..Default::default()
        }).unwrap();
        let links = build_links(&dep, &BlockerModel::default()).unwrap();
        let (ni, nj, s) = (users.len(), 4, users.len() * mc);
        let plan = esb_plan(1.075e12, 50e9, 0.75e9, s).unwrap();
        let x = damc_assign(&links, &plan, mc, 3, &DamcConfig::default()).unwrap();
        let at = |i: usize, j: usize, b: usize| x[(i * nj + j) * s + b];
        for b in 0..s {
            let c: f64 = (0..ni).flat_map(|i| (0..nj).map(move |j| (i, j))).map(|(i, j)| at(i, j, b)).sum();
            prop_assert_eq!(c, 1.0);
        }
        for i in 0..ni {
            let mut aps = 0.0;
            for j in 0..nj {
                let c: f64 = (0..s).map(|b| at(i, j, b)).sum();
                prop_assert!(c <= 1.0);
                aps += c;
            }
            prop_assert_eq!(aps, mc as f64);
        }
        for j in 0..nj {
            let c: f64 = (0..ni).flat_map(|i| (0..s).map(move |b| (i, b))).map(|(i, b)| at(i, j, b)).sum();
            prop_assert!(c <= 3.0);
        }
    }
}

/// Rate of one link at full power from first principles.
#[test]
fn oracle_matches_single_link_closed_form() {
    let sys = SystemParams {
        mc_order: 1,
        ..Default::default()
    };
    let links = LinkTable::from_parts(1, 1, vec![3.0], vec![0.85], 1.7).unwrap();
    let spec = spec_from_links(links, sys, Mode::Esb);
    let r = brute_force(&spec, &OracleConfig::default()).unwrap();
    let expect = single_link_rate(3.0, 0.85, &sys);
    assert!(
        (r.objective_bps - expect).abs() <= r.grid_slack_bps,
        "oracle {} vs closed form {expect} (slack {})",
        r.objective_bps,
        r.grid_slack_bps
    );
    // P_max is on the grid and the budget binds there.
    assert!((r.objective_bps - expect).abs() <= 1e-9 * expect);
}

#[test]
fn unreachable_rate_threshold_is_infeasible_for_oracle_and_solver() {
    let mut spec = toy_spec(1, Mode::Esb);
    spec.system.r_thr = 1e13;
    assert!(matches!(
        brute_force(&spec, &OracleConfig::default()),
        Err(Error::Infeasible { .. })
    ));
    assert!(matches!(
        solve_esb(&spec, &SolverConfig::default()),
        Err(Error::Infeasible { .. })
    ));
}

#[test]
fn oracle_is_invariant_to_user_relabeling() {
    let positions = vec![(3.0, 4.0), (14.0, 15.0)];
    let mk = |pos: Vec<(f64, f64)>| {
        let dep = standard_deployment(&DeploymentConfig {
            num_users: 2,
            user_positions: Some(pos),
            ap_positions: Some(vec![(5.0, 10.0), (15.0, 10.0)]),
            ..Default::default()
        })
        .unwrap();
        let links = build_links(&dep, &BlockerModel::default()).unwrap();
        spec_from_links(
            links,
            SystemParams {
                mc_order: 1,
                ..Default::default()
            },
            Mode::Esb,
        )
    };
    let a = brute_force(&mk(positions.clone()), &OracleConfig::default()).unwrap();
    let b = brute_force(&mk(positions.into_iter().rev().collect()), &OracleConfig::default()).unwrap();
    assert_eq!(a.objective_bps, b.objective_bps);
    assert_eq!(a.per_user_bps[0], b.per_user_bps[1]);
}

#[test]
fn oracle_refuses_beyond_cap() {
    let spec = reference_spec(1, Mode::Esb);
    let r = brute_force(
        &spec,
        &OracleConfig {
            assignment_cap: 1000,
            ..Default::default()
        },
    );
    assert!(matches!(r, Err(Error::CapExceeded { .. })));
}

#[test]
fn equal_power_meets_the_budget() {
    let spec = reference_spec(3, Mode::Esb);
    let st = equal_power_equal_band(&spec, &DamcConfig::default()).unwrap();
    let d = spec.dims();
    for i in 0..d.users {
        let spend: f64 = st
            .active()
            .iter()
            .filter(|t| t.0 == i)
            .map(|&(i, j, s)| spec.links.p_nb(i, j) * st.p[d.idx(i, j, s)])
            .sum();
        assert!(spend <= spec.system.p_max * (1.0 + 1e-12));
        let capped = st.active().iter().any(|&(i2, j, s)| i2 == i && st.p[d.idx(i, j, s)] == spec.system.p_max);
        assert!(capped || (spend - spec.system.p_max).abs() <= 1e-12 * spec.system.p_max);
    }
}

#[test]
fn equal_power_never_beats_the_solver() {
    let cfg = SolverConfig::default();
    for seed in 1..=20 {
        let spec = reference_spec(seed, Mode::Esb);
        let eq = thz_alloc::baselines::equal_power_equal_band_report(&spec, &DamcConfig::default(), &cfg).unwrap();
        let esb = solve_esb(&spec, &cfg).unwrap();
        assert!(
            eq.objective_bps <= esb.objective_bps,
            "seed {seed}: equal power {} > solver {}",
            eq.objective_bps,
            esb.objective_bps
        );
        let res = constraint_residuals(&eq.state, &spec);
        assert!(res.get("power_budget").is_none_or(|r| r.rel <= 1e-12), "seed {seed}: {res:?}");
    }
}

#[test]
fn damc_report_has_feasible_powers() {
    let spec = reference_spec(2, Mode::Esb);
    let r = damc(&spec, &DamcConfig::default(), &SolverConfig::default()).unwrap();
    assert!(r.converged, "{:?}", r.residuals.worst());
    assert_eq!(r.per_user_bps.len(), 6);
}
