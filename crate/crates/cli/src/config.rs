//! Experiment configuration file.
//!
//! The file is TOML. Every key is optional and falls back to the default
//! printed by `rtn-trng defaults`; sections may be written as tables or as
//! dotted keys (`harvester.mode = "single_ended"`). Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rtn_trng::analysis::{PsdConfig, DEFAULT_BLOCK_SIZE, DEFAULT_GUARD_SIGMAS, MAX_ORDER};
use rtn_trng::bitgen::{LfsrConfig, SamplerConfig};
use rtn_trng::harvester::{Disturbance, HarvesterConfig};
use rtn_trng::rtn::{DeviceParams, OperatingPoint};
use rtn_trng::seed;
use rtn_trng::stat_tests::BatteryConfig;

use crate::error::{CliError, Result, StageContext};

/// Independent random streams of one experiment. Stage `s` draws from
/// `seed::derive(master, 0x100 + s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate = 1,
    Harvest = 2,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Harvest => "harvest",
        }
    }

    pub fn seed(self, master: u64) -> u64 {
        seed::derive(master, 0x100 + self as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Seconds of device time rendered by `simulate`.
    pub duration: f64,
    /// Trace sample interval, seconds.
    pub dt: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            duration: 200.0,
            dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestRunConfig {
    pub duration: f64,
    /// Readout integration step, seconds.
    pub dt: f64,
    /// Also write node voltages and the unclocked decision stream.
    pub save_traces: bool,
}

impl Default for HarvestRunConfig {
    fn default() -> Self {
        Self {
            duration: 20.0,
            dt: 1e-4,
            save_traces: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub psd: PsdConfig,
    pub guard_sigmas: f64,
    pub entropy_block: usize,
    pub max_lag: usize,
    pub tlp_lag: usize,
    pub tlp_bins: usize,
    pub bitmap_width: usize,
    pub bitmap_height: usize,
    pub markov_order: usize,
    pub train_fraction: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            psd: PsdConfig::default(),
            guard_sigmas: DEFAULT_GUARD_SIGMAS,
            entropy_block: DEFAULT_BLOCK_SIZE,
            max_lag: 100,
            tlp_lag: 1,
            tlp_bins: 64,
            bitmap_width: 256,
            bitmap_height: 256,
            markov_order: 8,
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed.
    pub seed: u64,
    /// Output root; the `--out` flag and `RTN_TRNG_OUT` take precedence.
    pub output_dir: Option<PathBuf>,
    pub simulation: SimulationConfig,
    pub operating_point: OperatingPoint,
    /// Device of the single-ended branch and of differential branch X.
    pub device: DeviceParams,
    /// Differential branch Y; a copy of `device` when absent.
    pub device_b: Option<DeviceParams>,
    pub harvester: HarvesterConfig,
    pub harvest: HarvestRunConfig,
    pub disturbance: Disturbance,
    pub sampler: SamplerConfig,
    pub lfsr: LfsrConfig,
    pub analysis: AnalysisConfig,
    pub battery: BatteryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: None,
            simulation: SimulationConfig::default(),
            operating_point: OperatingPoint::default(),
            device: DeviceParams::default(),
            device_b: None,
            harvester: HarvesterConfig::default(),
            harvest: HarvestRunConfig::default(),
            disturbance: Disturbance::default(),
            sampler: SamplerConfig::default(),
            lfsr: LfsrConfig::default(),
            analysis: AnalysisConfig::default(),
            battery: BatteryConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn device_b(&self) -> &DeviceParams {
        self.device_b.as_ref().unwrap_or(&self.device)
    }

    pub fn validate(&self) -> Result<()> {
        self.operating_point.validate().stage("config.operating_point")?;
        self.device.validate().stage("config.device")?;
        if let Some(d) = &self.device_b {
            d.validate().stage("config.device_b")?;
        }
        self.harvester.validate().stage("config.harvester")?;
        self.disturbance.validate().stage("config.disturbance")?;
        self.lfsr.validate().stage("config.lfsr")?;
        for (name, v) in [
            ("simulation.duration", self.simulation.duration),
            ("simulation.dt", self.simulation.dt),
            ("harvest.duration", self.harvest.duration),
            ("harvest.dt", self.harvest.dt),
            ("sampler.sample_period", self.sampler.sample_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.simulation.dt > self.simulation.duration {
            return Err(CliError::config("simulation.dt exceeds simulation.duration"));
        }
        if self.sampler.sample_period < self.harvest.dt {
            return Err(CliError::config(
                "sampler.sample_period is shorter than harvest.dt",
            ));
        }
        let a = &self.analysis;
        if !(1..=16).contains(&a.entropy_block) {
            return Err(CliError::config("analysis.entropy_block must be in [1, 16]"));
        }
        if a.max_lag == 0 || a.tlp_lag == 0 || a.tlp_bins == 0 {
            return Err(CliError::config(
                "analysis.max_lag, tlp_lag and tlp_bins must be positive",
            ));
        }
        if a.bitmap_width == 0 || a.bitmap_height == 0 {
            return Err(CliError::config("bitmap dimensions must be positive"));
        }
        if !(1..=MAX_ORDER).contains(&a.markov_order) {
            return Err(CliError::config(format!(
                "analysis.markov_order must be in [1, {MAX_ORDER}]"
            )));
        }
        if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
            return Err(CliError::config("analysis.train_fraction must be in (0, 1)"));
        }
        if !(a.guard_sigmas.is_finite() && a.guard_sigmas >= 0.0) {
            return Err(CliError::config("analysis.guard_sigmas must be non-negative"));
        }
        if !(self.battery.alpha > 0.0 && self.battery.alpha < 1.0) {
            return Err(CliError::config("battery.alpha must be in (0, 1)"));
        }
        Ok(())
    }
}
