//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

use thz_alloc::absorption::AbsorptionFit;
use thz_alloc::model::{Mode, ProblemSpec, SpectrumFrame, SystemParams};
use thz_alloc::scenario::{build_links, standard_deployment, BlockerModel, DeploymentConfig, LinkTable};

/// Seeds of the reference scenarios.
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Reference indoor scenario: 6 users, 4 APs, MC order 2, 12 sub-bands.
pub fn reference_spec(seed: u64, mode: Mode) -> ProblemSpec {
    let dep = standard_deployment(&DeploymentConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let links = build_links(&dep, &BlockerModel::default()).unwrap();
    ProblemSpec::new(
        links,
        AbsorptionFit::reference_1thz(),
        SpectrumFrame::default(),
        SystemParams::default(),
        mode,
    )
}

/// Two users, two APs, one link each: two sub-bands.
pub fn toy_spec(seed: u64, mode: Mode) -> ProblemSpec {
    let dep = standard_deployment(&DeploymentConfig {
        seed,
        num_users: 2,
        ap_positions: Some(vec![(5.0, 10.0), (15.0, 10.0)]),
        ..Default::default()
    })
    .unwrap();
    let links = build_links(&dep, &BlockerModel::default()).unwrap();
    ProblemSpec::new(
        links,
        AbsorptionFit::reference_1thz(),
        SpectrumFrame::default(),
        SystemParams {
            mc_order: 1,
            ..Default::default()
        },
        mode,
    )
}

/// Spec over a hand-made link table.
pub fn spec_from_links(links: LinkTable, system: SystemParams, mode: Mode) -> ProblemSpec {
    ProblemSpec::new(links, AbsorptionFit::reference_1thz(), SpectrumFrame::default(), system, mode)
}

/// Rate of one link carrying one 50 GHz band at full power, from the channel
/// formulas written out directly.
pub fn single_link_rate(d: f64, p_nb: f64, sys: &SystemParams) -> f64 {
    let b = 50e9;
    let f = 1.075e12 - b / 2.0;
    let fit = AbsorptionFit::reference_1thz();
    let k = (fit.sigma1 + fit.sigma2 * f).exp() + fit.sigma3;
    let c = 299_792_458.0;
    let gain = (c / (4.0 * std::f64::consts::PI * f * d)).powi(2) * (-k * d).exp();
    let snr = sys.g_a * sys.g_u * gain * sys.p_max / (sys.noise_psd * b);
    p_nb * b * sys.phi * (1.0 + snr).log2()
}
