//! Sub-band layout: bandwidth vectors, center frequencies, equal-width plans,
//! the logarithmic bandwidth substitution and its concavity bound.

use serde::{Deserialize, Serialize};

use crate::absorption::AbsorptionFit;
use crate::error::{Error, Result};

/// Smallest sub-band width used by adaptive plans, Hz.
pub const DEFAULT_DELTA_HZ: f64 = 1e3;

/// Direction in which sub-band index grows along the frequency axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandOrder {
    /// Band 1 touches `f_ref` and later bands step downward.
    #[default]
    Descending,
    /// Band 1 touches `f_ref − B_tot` and later bands step upward.
    Ascending,
}

impl BandOrder {
    /// +1 when center frequencies grow with the index, −1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            BandOrder::Descending => -1.0,
            BandOrder::Ascending => 1.0,
        }
    }
}

/// Contiguous spectrum `[f_ref − B_tot, f_ref]` split into `S` sub-bands
/// separated by guard bands of width `B_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPlan {
    pub f_ref: f64,
    pub b_tot: f64,
    pub b_g: f64,
    pub bandwidths: Vec<f64>,
    #[serde(default)]
    pub order: BandOrder,
}

/// Tolerance on the spectrum budget: 1e-6 Hz or the f64 resolution of the
/// total, whichever is larger.
pub fn budget_tolerance(b_tot: f64) -> f64 {
    (1e-14 * b_tot.abs()).max(1e-6)
}

impl SpectrumPlan {
    pub fn new(f_ref: f64, b_tot: f64, b_g: f64, bandwidths: Vec<f64>, order: BandOrder) -> Result<Self> {
        let plan = Self {
            f_ref,
            b_tot,
            b_g,
            bandwidths,
            order,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn num_bands(&self) -> usize {
        self.bandwidths.len()
    }

    /// Spectrum left for the sub-bands once guard bands are removed.
    pub fn usable_bandwidth(&self) -> f64 {
        usable_bandwidth(self.b_tot, self.b_g, self.num_bands())
    }

    /// Signed budget residual `Σ B_s + (S−1)B_g − B_tot`, Hz.
    pub fn budget_residual(&self) -> f64 {
        self.bandwidths.iter().sum::<f64>() + self.b_g * (self.num_bands() as f64 - 1.0) - self.b_tot
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::InvalidInput("spectrum plan needs at least one sub-band".into()));
        }
        if !(self.f_ref > self.b_tot) || !(self.b_tot > 0.0) || !(self.b_g >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need f_ref > B_tot > 0 and B_g >= 0 (f_ref={}, B_tot={}, B_g={})",
                self.f_ref, self.b_tot, self.b_g
            )));
        }
        if let Some(b) = self.bandwidths.iter().find(|b| !(**b >= 0.0)) {
            return Err(Error::InvalidInput(format!("negative sub-band width {b}")));
        }
        let res = self.budget_residual();
        if res.abs() > budget_tolerance(self.b_tot) {
            return Err(Error::InvalidInput(format!(
                "sub-bands and guards must fill B_tot exactly (off by {res} Hz)"
            )));
        }
        Ok(())
    }

    /// Center frequency of every sub-band.
    pub fn center_frequencies(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(center_frequencies_unchecked(self.f_ref, self.b_tot, self.b_g, &self.bandwidths, self.order))
    }

    /// Largest sub-band width.
    pub fn max_bandwidth(&self) -> f64 {
        self.bandwidths.iter().copied().fold(0.0, f64::max)
    }
}

/// `B_tot − (S−1)·B_g`.
pub fn usable_bandwidth(b_tot: f64, b_g: f64, s: usize) -> f64 {
    b_tot - b_g * (s as f64 - 1.0)
}

/// Center frequencies without validating the budget (used inside solvers,
/// where intermediate widths need not fill the spectrum).
pub fn center_frequencies_unchecked(f_ref: f64, b_tot: f64, b_g: f64, b: &[f64], order: BandOrder) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.len());
    let mut offset = 0.0;
    for &bs in b {
        let f = match order {
            BandOrder::Descending => f_ref - offset - 0.5 * bs,
            BandOrder::Ascending => f_ref - b_tot + offset + 0.5 * bs,
        };
        out.push(f);
        offset += bs + b_g;
    }
    out
}

/// Offset of band `s` (0-based) before sub-band widths are added:
/// `f_ref − s·B_g` for descending plans, `f_ref − B_tot + s·B_g` for ascending.
pub fn band_anchor(f_ref: f64, b_tot: f64, b_g: f64, s: usize, order: BandOrder) -> f64 {
    match order {
        BandOrder::Descending => f_ref - s as f64 * b_g,
        BandOrder::Ascending => f_ref - b_tot + s as f64 * b_g,
    }
}

/// Weight of band `k`'s width in the center of band `s`: 1 for earlier bands,
/// ½ for the band itself and 0 for later ones.
pub fn offset_weight(s: usize, k: usize) -> f64 {
    match s.cmp(&k) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Equal => 0.5,
        std::cmp::Ordering::Less => 0.0,
    }
}

/// Full `S × S` matrix of [`offset_weight`].
pub fn offset_weights(s: usize) -> Vec<Vec<f64>> {
    (0..s).map(|r| (0..s).map(|c| offset_weight(r, c)).collect()).collect()
}

/// Equal-width plan with `B_s = (B_tot − (S−1)B_g)/S`.
pub fn esb_plan(f_ref: f64, b_tot: f64, b_g: f64, s: usize) -> Result<SpectrumPlan> {
    esb_plan_ordered(f_ref, b_tot, b_g, s, BandOrder::Descending)
}

pub fn esb_plan_ordered(f_ref: f64, b_tot: f64, b_g: f64, s: usize, order: BandOrder) -> Result<SpectrumPlan> {
    if s == 0 {
        return Err(Error::InvalidInput("need at least one sub-band".into()));
    }
    let width = usable_bandwidth(b_tot, b_g, s) / s as f64;
    if !(width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "guard bands leave no room: B_tot={b_tot} Hz, B_g={b_g} Hz, S={s}"
        )));
    }
    SpectrumPlan::new(f_ref, b_tot, b_g, vec![width; s], order)
}

/// Logarithmic change of variables `B = ξ + ω·ln(ς Z)` for one sub-band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Substitution {
    /// Hz
    pub xi: f64,
    /// Hz
    pub omega: f64,
    pub varsigma: f64,
}

impl Default for Substitution {
    fn default() -> Self {
        Self {
            xi: 5e9,
            omega: 0.5e9,
            varsigma: 1e-3,
        }
    }
}

impl Substitution {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.omega > 0.0 && self.varsigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "substitution constants must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn b_from_z(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::Domain(format!("Z must be positive, got {z}")));
        }
        Ok(self.xi + self.omega * (self.varsigma * z).ln())
    }

    pub fn z_from_b(&self, b: f64) -> f64 {
        ((b - self.xi) / self.omega).exp() / self.varsigma
    }

    /// dB/dZ
    pub fn db_dz(&self, z: f64) -> f64 {
        self.omega / z
    }

    /// d²B/dZ²
    pub fn d2b_dz2(&self, z: f64) -> f64 {
        -self.omega / (z * z)
    }

    /// `Z` giving the smallest admissible width `δ`.
    pub fn z_min(&self, delta: f64) -> f64 {
        self.z_from_b(delta)
    }

    /// `Z` giving the width cap `B_max`.
    pub fn z_max(&self, b_max: f64) -> f64 {
        self.z_from_b(b_max)
    }

    /// True when `1/ω` exceeds the concavity bound.
    pub fn complies(&self, omega_bar: f64) -> bool {
        1.0 / self.omega > omega_bar
    }
}

/// Concavity bound `σ2 (D·K̂(f_eval)·exp(D σ3) − 1)` where `f_eval` is the most
/// absorbing edge of the spectrum and `D` must exceed the longest link.
pub fn omega_bar(fit: &AbsorptionFit, f_eval: f64, d: f64, d_max: f64) -> Result<f64> {
    if !(d > d_max) {
        return Err(Error::Precondition(format!(
            "D = {d} m must exceed the longest link distance {d_max} m"
        )));
    }
    Ok(fit.sigma2 * (d * fit.k_hat(f_eval) * (d * fit.sigma3).exp() - 1.0))
}

/// Returns `sub` with ω shrunk to `0.9/ω̄` when it violates the bound, and
/// whether a change was made.
pub fn enforce_compliance(sub: Substitution, omega_bar: f64) -> (Substitution, bool) {
    if omega_bar <= 0.0 || sub.complies(omega_bar) {
        return (sub, false);
    }
    let shrunk = Substitution {
        omega: 0.9 / omega_bar,
        ..sub
    };
    log::warn!(
        "substitution slope {:.4e} Hz violates the concavity bound {:.4e} 1/Hz; using {:.4e} Hz",
        sub.omega,
        omega_bar,
        shrunk.omega
    );
    (shrunk, true)
}
