//! Scenario configuration files.
//!
//! The format is TOML: flat `key = value` pairs grouped in sections. See
//! `data/gctf_loop.toml` for the reference scenario.

use std::fs;
use std::path::{Path, PathBuf};

use gasnet_core::pipeline::{PipelineConfig, WeightSpec};
use gasnet_core::scenario::SimulationSettings;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REFERENCE_CONFIG: &str = include_str!("../data/gctf_loop.toml");
pub const REFERENCE_NETWORK: &str = include_str!("../data/gctf_loop.net");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub sensors: SensorSection,
    pub control: ControlSection,
    pub reduction: ReductionSection,
    pub sampling: SamplingSection,
    pub disturbance: DisturbanceSection,
    pub simulation: HorizonSection,
    pub weights: WeightSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    /// Network file, relative to the config file.
    pub network: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub outputs: Vec<String>,
    pub filter_order: usize,
    pub cutoff_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub inputs: Vec<String>,
    #[serde(default)]
    pub tracked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub sample_time: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub input: String,
    pub magnitude: f64,
    pub step_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub output: Vec<f64>,
    pub input: Vec<f64>,
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub integral: Vec<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.simulation_settings().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_CONFIG).expect("bundled config parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            sensors: self.sensors.outputs.clone(),
            control_inputs: self.control.inputs.clone(),
            disturbance: self.disturbance.input.clone(),
            filter_order: self.sensors.filter_order,
            filter_cutoff_hz: self.sensors.cutoff_hz,
            reduction_order: self.reduction.order,
            sample_time: self.sampling.sample_time,
            weights: WeightSpec {
                output_weight: self.weights.output.clone(),
                input_weight: self.weights.input.clone(),
                process_noise: self.weights.process_noise,
                measurement_noise: self.weights.measurement_noise,
                integral_weight: self.weights.integral.clone(),
            },
            tracked: self.control.tracked.clone(),
        }
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        SimulationSettings {
            sample_time: self.sampling.sample_time,
            substeps: self.sampling.substeps,
            horizon: self.simulation.horizon,
            disturbance_magnitude: self.disturbance.magnitude,
            step_time: self.disturbance.step_time,
        }
    }
}

/// A config together with the network text it points at.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub network_source: String,
    pub network_path: Option<PathBuf>,
}

impl LoadedScenario {
    pub fn reference() -> Self {
        LoadedScenario { config: ScenarioConfig::reference(), network_source: REFERENCE_NETWORK.to_string(), network_path: None }
    }

    pub fn load(config_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
        let config = ScenarioConfig::from_toml(&text)?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        let net = base.join(&config.scenario.network);
        let network_source = fs::read_to_string(&net).map_err(|e| Error::io(&net, e))?;
        Ok(LoadedScenario { config, network_source, network_path: Some(net) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips() {
        let cfg = ScenarioConfig::reference();
        assert_eq!(cfg.sensors.outputs, ["p_suc", "p_dstl"]);
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_short_substeps() {
        let bad = REFERENCE_CONFIG.replace("order = 11", "order = 11\nsurprise = 1");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(Error::Config(_))));
        let coarse = REFERENCE_CONFIG.replace("substeps = 10", "substeps = 4");
        assert!(matches!(ScenarioConfig::from_toml(&coarse), Err(Error::Config(_))));
        let early = REFERENCE_CONFIG.replace("horizon = 1500.0", "horizon = 0.25");
        assert!(ScenarioConfig::from_toml(&early).is_err());
    }
}
