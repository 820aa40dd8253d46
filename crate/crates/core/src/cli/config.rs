//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::absorption::{AbsorptionFit, SlopeDirection};
use crate::baselines::{DamcConfig, OracleConfig};
use crate::error::{Error, Result};
use crate::model::{Mode, ProblemSpec, SpectrumFrame, SystemParams};
use crate::scenario::{build_links, standard_deployment, BlockageSimConfig, BlockerModel, DeploymentConfig};
use crate::solver::SolverConfig;
use crate::spectrum::{Substitution, DEFAULT_DELTA_HZ};

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "THZ_ALLOC_OUTPUT_DIR";

/// Allocation strategy run for each scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Equal sub-band widths, optimized assignment and powers.
    #[serde(rename = "ESB")]
    Esb,
    /// Adaptive sub-band widths.
    #[serde(rename = "ASB")]
    Asb,
    /// Distance-aware assignment with optimized powers.
    #[serde(rename = "DAMC")]
    Damc,
    /// Distance-aware assignment with equal power split.
    #[serde(rename = "EQ")]
    Eq,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Esb, Strategy::Asb, Strategy::Damc, Strategy::Eq];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Esb => "ESB",
            Strategy::Asb => "ASB",
            Strategy::Damc => "DAMC",
            Strategy::Eq => "EQ",
        }
    }

    /// Whether the strategy runs an optimizer whose convergence is reported.
    pub fn is_optimizer(self) -> bool {
        matches!(self, Strategy::Esb | Strategy::Asb)
    }
}

/// Quantity varied across a sweep. Values use the units of the matching
/// config field (W, Hz, 1/m²); `mc_order` values must be integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PMax,
    McOrder,
    BMax,
    BTot,
    LambdaB,
    FRef,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::PMax => "p_max",
            SweepVariable::McOrder => "mc_order",
            SweepVariable::BMax => "b_max",
            SweepVariable::BTot => "b_tot",
            SweepVariable::LambdaB => "lambda_b",
            SweepVariable::FRef => "f_ref",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Spectrum frame plus the adaptive-width settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub f_ref: f64,
    pub b_tot: f64,
    pub b_g: f64,
    /// Smallest adaptive sub-band width, Hz.
    pub delta: f64,
    pub substitution: Substitution,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let frame = SpectrumFrame::default();
        Self {
            f_ref: frame.f_ref,
            b_tot: frame.b_tot,
            b_g: frame.b_g,
            delta: DEFAULT_DELTA_HZ,
            substitution: Substitution::default(),
        }
    }
}

impl SpectrumConfig {
    pub fn frame(&self) -> SpectrumFrame {
        SpectrumFrame {
            f_ref: self.f_ref,
            b_tot: self.b_tot,
            b_g: self.b_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write measured wall times; off keeps reruns byte-identical.
    pub record_timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            record_timing: false,
        }
    }
}

/// One experiment: scenario, solver settings, seeds, strategies and an
/// optional sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    /// Deployment; its `seed` is replaced by each entry of `seeds`.
    pub scenario: DeploymentConfig,
    pub blockers: BlockerModel,
    pub spectrum: SpectrumConfig,
    /// Absorption surrogate; the reference 1 THz fit when absent.
    pub absorption: Option<AbsorptionFit>,
    pub system: SystemParams,
    pub solver: SolverConfig,
    pub damc: DamcConfig,
    pub oracle: OracleConfig,
    pub blockage: BlockageSimConfig,
    pub sweep: Option<SweepConfig>,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            strategies: Strategy::ALL.to_vec(),
            scenario: DeploymentConfig::default(),
            blockers: BlockerModel::default(),
            spectrum: SpectrumConfig::default(),
            absorption: None,
            system: SystemParams::default(),
            solver: SolverConfig::default(),
            damc: DamcConfig::default(),
            oracle: OracleConfig::default(),
            blockage: BlockageSimConfig::default(),
            sweep: None,
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must not be empty".into()));
        }
        let mut seen = self.strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.strategies.len() {
            return Err(Error::Config("strategies must not repeat".into()));
        }
        self.system.validate().map_err(config_error)?;
        self.solver.validate().map_err(config_error)?;
        self.blockers
            .validate(self.scenario.h_a, self.scenario.h_u)
            .map_err(config_error)?;
        let sp = &self.spectrum;
        if !(sp.f_ref > sp.b_tot && sp.b_tot > 0.0 && sp.b_g >= 0.0) {
            return Err(Error::Config(format!(
                "spectrum needs f_ref > b_tot > 0 and b_g >= 0, got {sp:?}"
            )));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep values must not be empty".into()));
            }
            for &v in &sw.values {
                self.with_value(sw.variable, v)?;
            }
        }
        Ok(())
    }

    /// Output directory: the environment override when set, else the config.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output.dir.clone(),
        }
    }

    /// Number of sub-bands held fixed by an MC-order sweep.
    pub fn fixed_band_count(&self) -> usize {
        self.scenario.num_users * self.system.mc_order
    }

    /// Copy of the config with one sweep value applied.
    pub fn with_value(&self, var: SweepVariable, value: f64) -> Result<Self> {
        let bad = |what: &str| Err(Error::Config(format!("{} = {value}: {what}", var.label())));
        if !value.is_finite() {
            return bad("must be finite");
        }
        let mut c = self.clone();
        match var {
            SweepVariable::PMax => {
                if !(value > 0.0) {
                    return bad("must be positive");
                }
                c.system.p_max = value;
            }
            SweepVariable::McOrder => {
                let s = self.fixed_band_count();
                if value < 1.0 || value.fract() != 0.0 {
                    return bad("must be a positive integer");
                }
                let n = value as usize;
                if !s.is_multiple_of(n) {
                    return bad(&format!("must divide the {s} sub-bands"));
                }
                if self.scenario.user_positions.is_some() {
                    return bad("needs drawn user positions, not fixed ones");
                }
                c.system.mc_order = n;
                c.scenario.num_users = s / n;
            }
            SweepVariable::BMax => {
                if !(value > 0.0) {
                    return bad("must be positive");
                }
                c.system.b_max = value;
            }
            SweepVariable::BTot => {
                if !(value > 0.0 && value < c.spectrum.f_ref) {
                    return bad("must lie in (0, f_ref)");
                }
                c.spectrum.b_tot = value;
            }
            SweepVariable::LambdaB => {
                if value < 0.0 {
                    return bad("must be non-negative");
                }
                c.blockers.lambda = value;
            }
            SweepVariable::FRef => {
                if !(value > c.spectrum.b_tot) {
                    return bad("must exceed b_tot");
                }
                c.spectrum.f_ref = value;
            }
        }
        Ok(c)
    }

    pub fn fit(&self) -> AbsorptionFit {
        self.absorption.unwrap_or_else(AbsorptionFit::reference_1thz)
    }

    /// Adaptive mode matching the slope of the absorption fit.
    pub fn adaptive_mode(&self) -> Mode {
        match self.fit().direction {
            SlopeDirection::Increasing => Mode::AsbPacsr,
            SlopeDirection::Decreasing => Mode::AsbNacsr,
        }
    }

    /// Problem for one seed and mode.
    pub fn build_spec(&self, seed: u64, mode: Mode) -> Result<ProblemSpec> {
        let dep = standard_deployment(&DeploymentConfig {
            seed,
            ..self.scenario.clone()
        })?;
        let links = build_links(&dep, &self.blockers)?;
        let mut spec = ProblemSpec::new(links, self.fit(), self.spectrum.frame(), self.system, mode);
        spec.delta = self.spectrum.delta;
        spec.substitution = self.spectrum.substitution;
        Ok(spec)
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn mc_order_sweep_holds_band_count() {
        let cfg = ExperimentConfig::default();
        for (n, users) in [(1.0, 12), (2.0, 6), (3.0, 4), (4.0, 3)] {
            let c = cfg.with_value(SweepVariable::McOrder, n).unwrap();
            assert_eq!(c.scenario.num_users, users);
            assert_eq!(c.scenario.num_users * c.system.mc_order, 12);
        }
        assert!(cfg.with_value(SweepVariable::McOrder, 5.0).is_err());
        assert!(cfg.with_value(SweepVariable::McOrder, 1.5).is_err());
    }

    #[test]
    fn empty_strategies_are_rejected() {
        let r = ExperimentConfig::from_toml_str("strategies = []");
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[system]\np_maxx = 1.0").is_err());
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let c = ExperimentConfig::from_toml_str(
            "seeds = [3, 4]\nstrategies = [\"ESB\", \"DAMC\"]\n[system]\np_max = 0.002\n[sweep]\nvariable = \"lambda_b\"\nvalues = [0.0, 0.2]\n",
        )
        .unwrap();
        assert_eq!(c.system.p_max, 0.002);
        assert_eq!(c.system.mc_order, 2);
        assert_eq!(c.strategies, vec![Strategy::Esb, Strategy::Damc]);
        assert_eq!(c.sweep.unwrap().variable, SweepVariable::LambdaB);
    }
}
