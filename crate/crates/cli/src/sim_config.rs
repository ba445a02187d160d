//! Cohort config file for `disagg simulate`.

use std::path::Path;

use serde::Deserialize;

use disagg_core::error::{Error, Result};
use disagg_core::model::{ModelVariant, SamplingSpec};
use disagg_core::simulation::SimConfig;

/// Schema tag expected at the top of a cohort config.
pub const SIM_SCHEMA: &str = "disagg-sim/1";

fn base() -> SimConfig {
    SimConfig::default()
}

fn d_households() -> usize {
    20
}
fn d_variant() -> String {
    "ifnhmm".into()
}
fn d_days() -> usize {
    base().days
}
fn d_num_appliances() -> usize {
    base().num_appliances
}
fn d_states() -> usize {
    base().states_per_appliance
}
fn d_interval() -> u32 {
    base().sampling.interval_seconds
}
fn d_bins() -> usize {
    base().sampling.bins_per_day
}
fn d_mean_scale() -> f64 {
    base().mean_scale
}
fn d_self_loop() -> f64 {
    base().self_loop_bias
}
fn d_strength() -> f64 {
    base().nonhomogeneous_strength
}
fn d_sigma() -> f64 {
    base().noise_sigma
}

/// JSON description of a synthetic cohort: how many households to draw and
/// the generator knobs shared by all of them. Every field except `schema`
/// and `households` has a default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCohortConfig {
    pub schema: String,
    pub households: usize,
    #[serde(default = "d_variant")]
    variant: String,
    #[serde(default = "d_days")]
    pub days: usize,
    #[serde(default = "d_num_appliances")]
    pub num_appliances: usize,
    #[serde(default = "d_states")]
    pub states_per_appliance: usize,
    #[serde(default = "d_interval")]
    pub interval_seconds: u32,
    #[serde(default = "d_bins")]
    pub bins_per_day: usize,
    #[serde(default = "d_mean_scale")]
    pub mean_scale: f64,
    #[serde(default = "d_self_loop")]
    pub self_loop_bias: f64,
    #[serde(default = "d_strength")]
    pub nonhomogeneous_strength: f64,
    #[serde(default = "d_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimCohortConfig {
    fn default() -> Self {
        SimCohortConfig {
            schema: SIM_SCHEMA.into(),
            households: d_households(),
            variant: d_variant(),
            days: d_days(),
            num_appliances: d_num_appliances(),
            states_per_appliance: d_states(),
            interval_seconds: d_interval(),
            bins_per_day: d_bins(),
            mean_scale: d_mean_scale(),
            self_loop_bias: d_self_loop(),
            nonhomogeneous_strength: d_strength(),
            noise_sigma: d_sigma(),
            seed: 0,
        }
    }
}

impl SimCohortConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SimCohortConfig = serde_json::from_str(&text).map_err(|e| Error::DataFormat {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if cfg.schema != SIM_SCHEMA {
            return Err(Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: format!("schema {:?}, expected {SIM_SCHEMA:?}", cfg.schema),
            });
        }
        if cfg.households == 0 {
            return Err(Error::DataFormat {
                path: path.display().to_string(),
                line: 1,
                msg: "households must be positive".into(),
            });
        }
        // Fail on bad generator knobs now, not per household.
        cfg.sim_config()?.validate()?;
        cfg.variant()?;
        Ok(cfg)
    }

    /// The truth variant traces are sampled under.
    pub fn variant(&self) -> Result<ModelVariant> {
        self.variant.parse()
    }

    /// Generator knobs for one household; the caller fills in the seed.
    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            num_appliances: self.num_appliances,
            states_per_appliance: self.states_per_appliance,
            days: self.days,
            sampling: SamplingSpec::new(self.interval_seconds, self.bins_per_day)?,
            mean_scale: self.mean_scale,
            self_loop_bias: self.self_loop_bias,
            nonhomogeneous_strength: self.nonhomogeneous_strength,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        })
    }
}
