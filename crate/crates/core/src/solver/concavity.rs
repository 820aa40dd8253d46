//! Numerical concavity check of path gain and link rate in the substituted
//! width variables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::asb::project_widths;
use crate::error::Result;
use crate::model::subproblem::WidthContext;
use crate::model::ProblemSpec;
use crate::units::RATE_UNIT_BPS;

/// Default probe count.
pub const DEFAULT_PROBES: usize = 100;

/// Largest tolerated relative curvature `f''·Z²/|f|`.
pub const CURVATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub probes: usize,
    /// Largest relative second derivative of the path gain over own and
    /// lower-index variables.
    pub max_gain_curvature: f64,
    /// Same for the link rate.
    pub max_rate_curvature: f64,
    /// Largest absolute second derivative with respect to a higher-index
    /// variable, which must vanish.
    pub max_upper_curvature: f64,
    pub tolerance: f64,
    pub concave: bool,
}

/// Central second difference `(f(z+h) − 2f(z) + f(z−h))/h²`.
pub fn second_difference(f: &dyn Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h)
}

/// Relative curvature `f''(z)·z²/|f(z)|` by central differences.
pub fn relative_curvature(f: &dyn Fn(f64) -> f64, z: f64) -> f64 {
    let h = 1e-3 * z;
    second_difference(f, z, h) * z * z / f(z).abs().max(f64::MIN_POSITIVE)
}

/// Probes gain and rate curvature at `n_probes` random feasible width
/// vectors, link distances up to the longest link and powers up to the cap.
pub fn check_concavity(spec: &ProblemSpec, n_probes: usize, seed: u64) -> Result<ConcavityReport> {
    let sub = spec.substitution;
    sub.validate()?;
    let s_count = spec.num_bands();
    let ctx = WidthContext::new(spec, sub, (0..s_count).collect());
    let usable = spec.usable_bandwidth();
    let b_max = spec.system.b_max.min(usable);
    let d_max = spec.links.d_max();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gain_c = f64::NEG_INFINITY;
    let mut rate_c = f64::NEG_INFINITY;
    let mut upper = 0.0f64;
    for _ in 0..n_probes {
        let raw: Vec<f64> = (0..s_count).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let b: Vec<f64> = raw.iter().map(|r| r / total * usable).collect();
        let b = project_widths(&b, usable, spec.delta, b_max);
        let z: Vec<f64> = b.iter().map(|&v| sub.z_from_b(v)).collect();
        let s = rng.random_range(0..s_count);
        let d = rng.random_range(0.05 * d_max..=d_max);
        let snr_budget = rng.random_range(0.01..1.0) * spec.system.p_max * spec.system.link_budget();
        for nu in 0..s_count {
            let at = |v: f64| {
                let mut zz = z.clone();
                zz[nu] = v;
                zz
            };
            let gain = |v: f64| ctx.log_gain(&at(v), s, d).map(|g| g.value.exp()).unwrap_or(f64::NAN);
            let rate = |v: f64| {
                ctx.rate(&at(v), s, d, snr_budget)
                    .map(|r| r.value * RATE_UNIT_BPS)
                    .unwrap_or(f64::NAN)
            };
            if nu > s {
                let h = 1e-3 * z[nu];
                upper = upper
                    .max(second_difference(&gain, z[nu], h).abs())
                    .max(second_difference(&rate, z[nu], h).abs());
            } else {
                gain_c = gain_c.max(relative_curvature(&gain, z[nu]));
                rate_c = rate_c.max(relative_curvature(&rate, z[nu]));
            }
        }
    }
    let concave = gain_c <= CURVATURE_TOL && rate_c <= CURVATURE_TOL && upper == 0.0;
    Ok(ConcavityReport {
        probes: n_probes,
        max_gain_curvature: gain_c,
        max_rate_curvature: rate_c,
        max_upper_curvature: upper,
        tolerance: CURVATURE_TOL,
        concave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_sign_on_synthetic_functions() {
        let convex = |z: f64| z.exp();
        let concave = |z: f64| z.ln();
        assert!(relative_curvature(&convex, 2.0) > 0.1);
        assert!(relative_curvature(&concave, 2.0) < -0.1);
        let linear = |z: f64| 3.0 * z + 1.0;
        assert!(relative_curvature(&linear, 2.0).abs() < 1e-8);
    }
}
