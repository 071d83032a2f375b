//! Pipeline plus closed-loop simulations for one scenario.

use std::fmt;

use gasnet_core::lti::LtiSystem;
use gasnet_core::pipeline::{run_pipeline, PipelineArtifacts};
use gasnet_core::scenario::{settled_drift, simulate_closed_loop, steady_state_balance, BalanceReport, ScenarioTrace, SimulationSettings};
use serde::{Deserialize, Serialize};

use crate::config::LoadedScenario;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Lqg,
    LqgIntegral,
}

impl Controller {
    pub const ALL: [Controller; 2] = [Controller::Lqg, Controller::LqgIntegral];

    pub fn tag(self) -> &'static str {
        match self {
            Controller::Lqg => "lqg",
            Controller::LqgIntegral => "lqgi",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Which continuous plant the controller is run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plant {
    /// Full-order model with the sensor filters; also carries raw pressures.
    Filtered,
    /// Full-order model measured without filters.
    Unfiltered,
    /// Reduced-order design model.
    Reduced,
}

impl Plant {
    pub const ALL: [Plant; 3] = [Plant::Filtered, Plant::Unfiltered, Plant::Reduced];

    pub fn tag(self) -> &'static str {
        match self {
            Plant::Filtered => "filtered",
            Plant::Unfiltered => "unfiltered",
            Plant::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub fn plant_model(art: &PipelineArtifacts, plant: Plant) -> &LtiSystem {
    match plant {
        Plant::Filtered => &art.simulation_plant,
        Plant::Unfiltered => &art.unfiltered,
        Plant::Reduced => &art.reduced,
    }
}

pub fn controller_model(art: &PipelineArtifacts, controller: Controller) -> &LtiSystem {
    match controller {
        Controller::Lqg => &art.lqg.system,
        Controller::LqgIntegral => &art.lqg_integral.system,
    }
}

pub fn simulate(art: &PipelineArtifacts, settings: &SimulationSettings, controller: Controller, plant: Plant) -> Result<ScenarioTrace> {
    let sys = plant_model(art, plant);
    Ok(simulate_closed_loop(sys, Some(controller_model(art, controller)), &art.wiring(), settings)?)
}

/// Scalar figures of one closed-loop trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub controller: Controller,
    pub plant: Plant,
    /// Final value of each measured output.
    pub final_outputs: Vec<(String, f64)>,
    /// Largest magnitude of each measured output.
    pub peak_outputs: Vec<(String, f64)>,
    /// Last time any measured output is farther than 2% of its peak from its final value.
    pub settling_time: f64,
    pub drift: f64,
    pub balance: Option<BalanceReport>,
}

pub const SETTLING_BAND: f64 = 0.02;

pub fn summarize(trace: &ScenarioTrace, measured: usize, controller: Controller, plant: Plant, art: &PipelineArtifacts) -> TraceSummary {
    let mut final_outputs = Vec::new();
    let mut peak_outputs = Vec::new();
    let mut settling_time: f64 = 0.0;
    for j in 0..measured.min(trace.outputs.ncols()) {
        let col = trace.outputs.col_vec(j);
        let last = col.last().copied().unwrap_or(0.0);
        let peak = col.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        let name = trace.output_names[j].clone();
        if let Some(k) = col.iter().rposition(|v| !((v - last).abs() <= SETTLING_BAND * peak)) {
            settling_time = settling_time.max(trace.time[(k + 1).min(trace.len() - 1)]);
        }
        final_outputs.push((name.clone(), last));
        peak_outputs.push((name, peak));
    }
    TraceSummary {
        controller,
        plant,
        final_outputs,
        peak_outputs,
        settling_time,
        drift: settled_drift(trace),
        balance: steady_state_balance(trace, &art.command_signs, art.disturbance_sign).ok(),
    }
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub summary: TraceSummary,
    pub trace: ScenarioTrace,
}

/// Everything produced for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: LoadedScenario,
    pub artifacts: PipelineArtifacts,
    pub traces: Vec<TraceRecord>,
}

impl ScenarioRun {
    pub fn name(&self) -> &str {
        &self.scenario.config.scenario.name
    }

    pub fn trace(&self, controller: Controller, plant: Plant) -> Option<&TraceRecord> {
        self.traces.iter().find(|t| t.summary.controller == controller && t.summary.plant == plant)
    }
}

pub fn build(scenario: &LoadedScenario) -> Result<PipelineArtifacts> {
    Ok(run_pipeline(&scenario.network_source, &scenario.config.pipeline_config())?)
}

/// Pipeline, then every controller against every plant variant.
pub fn run_scenario(scenario: LoadedScenario) -> Result<ScenarioRun> {
    let artifacts = build(&scenario)?;
    let settings = scenario.config.simulation_settings();
    let measured = scenario.config.sensors.outputs.len();
    let mut traces = Vec::new();
    for controller in Controller::ALL {
        for plant in Plant::ALL {
            let trace = simulate(&artifacts, &settings, controller, plant)?;
            let summary = summarize(&trace, measured, controller, plant, &artifacts);
            traces.push(TraceRecord { summary, trace });
        }
    }
    Ok(ScenarioRun { scenario, artifacts, traces })
}
