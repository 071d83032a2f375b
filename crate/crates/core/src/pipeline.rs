//! End-to-end model and controller construction from network source text.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::conservation::{analyze_integrator, check_conservation, check_detectability_rank, ConservationReport, DetectabilityReport, IntegratorReport};
use crate::interconnect::{compile, CompiledNetwork, InterconnectError};
use crate::linalg::Matrix;
use crate::lqg::{assemble_lqg, assemble_lqg_integral, closed_loop_spectral_radius, ControllerRealization, LqgWeights};
use crate::lti::{discretize_zoh, LtiSystem, SignalLabel};
use crate::netdsl::{self, count_check, ParseDiagnostic, PortCounts};
use crate::reduction::{append_sensor_filters, balanced_truncate_with, butterworth_lowpass, ReductionOptions, ReductionReport};
use crate::scenario::LoopWiring;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Validate,
    Close,
    Conservation,
    Filter,
    Reduce,
    Discretize,
    Design,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Validate => "validate",
            Stage::Close => "close",
            Stage::Conservation => "conservation",
            Stage::Filter => "filter",
            Stage::Reduce => "reduce",
            Stage::Discretize => "discretize",
            Stage::Design => "design",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl PipelineError {
    fn new(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError { stage, message: e.to_string(), diagnostics: Vec::new() }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)?;
        for d in &self.diagnostics {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

impl core::error::Error for PipelineError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    /// Diagonal weight on each filtered measurement.
    pub output_weight: Vec<f64>,
    /// Diagonal weight on each control input.
    pub input_weight: Vec<f64>,
    /// `Q_w = process_noise * B B^T`.
    pub process_noise: f64,
    /// `R_v = measurement_noise * I`.
    pub measurement_noise: f64,
    /// Weight on the integrator of each tracked measurement.
    pub integral_weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Pressure outputs passed through the anti-aliasing filters and fed back.
    pub sensors: Vec<String>,
    pub control_inputs: Vec<String>,
    pub disturbance: String,
    pub filter_order: usize,
    pub filter_cutoff_hz: f64,
    pub reduction_order: usize,
    pub sample_time: f64,
    pub weights: WeightSpec,
    /// Measurements with integral action; all sensors when empty.
    pub tracked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOrder {
    pub stage: Stage,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationSummary {
    pub counts: PortCounts,
    pub network: ConservationReport,
    pub integrator: IntegratorReport,
    pub detectability: DetectabilityReport,
    pub well_posed_cond: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub lqg_order: usize,
    pub lqg_integral_order: usize,
    pub lqg_loop_radius: f64,
    pub lqg_integral_loop_radius: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub network: CompiledNetwork,
    pub conservation: ConservationSummary,
    /// Design plant: controls and disturbance in, filtered sensors out.
    pub filtered: LtiSystem,
    /// Same dynamics with every unfiltered network output appended.
    pub simulation_plant: LtiSystem,
    /// Unfiltered network with the same input ordering.
    pub unfiltered: LtiSystem,
    pub reduced: LtiSystem,
    pub reduction: ReductionReport,
    pub discrete: LtiSystem,
    /// Discrete plant restricted to the control inputs.
    pub design_plant: LtiSystem,
    pub lqg: ControllerRealization,
    pub lqg_integral: ControllerRealization,
    pub design: DesignSummary,
    pub orders: Vec<StageOrder>,
    /// Physical inflow per unit of each control input, and of the disturbance.
    pub command_signs: Vec<f64>,
    pub disturbance_sign: f64,
}

impl PipelineArtifacts {
    /// Loop wiring shared by every plant variant: inputs are the controls then
    /// the disturbance, and the measured sensors are the leading outputs.
    pub fn wiring(&self) -> LoopWiring {
        let nu = self.command_signs.len();
        LoopWiring {
            control_inputs: (0..nu).collect(),
            measured_outputs: (0..self.lqg.system.n_inputs()).collect(),
            disturbance_input: nu,
        }
    }
}

fn names_to_indices(names: &[String], labels: &[SignalLabel], what: &str, stage: Stage) -> Result<Vec<usize>, PipelineError> {
    names
        .iter()
        .map(|n| labels.iter().position(|l| &l.name == n).ok_or_else(|| PipelineError::new(stage, format!("unknown {what} `{n}`"))))
        .collect()
}

pub fn run_pipeline(source: &str, cfg: &PipelineConfig) -> Result<PipelineArtifacts, PipelineError> {
    let desc = netdsl::parse(source).map_err(|d| PipelineError { stage: Stage::Parse, message: format!("{} syntax diagnostics", d.len()), diagnostics: d })?;
    let reg = netdsl::validate_rules(&desc).map_err(|d| PipelineError { stage: Stage::Validate, message: format!("{} rule violations", d.len()), diagnostics: d })?;
    count_check(&desc, &reg).map_err(|d| PipelineError { stage: Stage::Validate, message: "port count identities fail".into(), diagnostics: d })?;
    let network = compile(&desc).map_err(|e| match e {
        InterconnectError::Invalid(d) => PipelineError { stage: Stage::Validate, message: "invalid network".into(), diagnostics: d },
        other => PipelineError::new(Stage::Close, other),
    })?;
    let closed = &network.closed;
    let mut orders = alloc::vec![StageOrder { stage: Stage::Close, order: closed.order() }];

    let cons = Stage::Conservation;
    let conservation = ConservationSummary {
        counts: network.counts.clone(),
        network: check_conservation(closed, &network.partition).map_err(|e| PipelineError::new(cons, e))?,
        integrator: analyze_integrator(&network).map_err(|e| PipelineError::new(cons, e))?,
        detectability: check_detectability_rank(&network.aggregate, &network.partition).map_err(|e| PipelineError::new(cons, e))?,
        well_posed_cond: network.matrices.cond,
    };

    let fs = Stage::Filter;
    let ins = closed.input_labels();
    let outs = closed.output_labels();
    let controls = names_to_indices(&cfg.control_inputs, ins, "control input", fs)?;
    let dist = names_to_indices(core::slice::from_ref(&cfg.disturbance), ins, "disturbance input", fs)?[0];
    let sensors = names_to_indices(&cfg.sensors, outs, "sensor output", fs)?;
    if controls.contains(&dist) {
        return Err(PipelineError::new(fs, "disturbance cannot also be a control input"));
    }
    let mut input_order = controls.clone();
    input_order.push(dist);
    let plant_in = closed.select_inputs(&input_order).map_err(|e| PipelineError::new(fs, e))?;

    let mut sim_rows = sensors.clone();
    sim_rows.extend(0..closed.n_outputs());
    let dup = plant_in.select_outputs(&sim_rows).map_err(|e| PipelineError::new(fs, e))?;
    let mut dup_labels = dup.output_labels().to_vec();
    for (k, l) in dup_labels.iter_mut().enumerate().skip(sensors.len()) {
        *l = l.renamed(format!("{}_raw", outs[sim_rows[k]].name));
    }
    let dup_inputs = dup.input_labels().to_vec();
    let dup = dup.with_labels(dup_inputs, dup_labels).map_err(|e| PipelineError::new(fs, e))?;
    let filter = butterworth_lowpass(cfg.filter_order, cfg.filter_cutoff_hz).map_err(|e| PipelineError::new(fs, e))?;
    let sensor_rows: Vec<usize> = (0..sensors.len()).collect();
    let simulation_plant = append_sensor_filters(&dup, &filter, &sensor_rows).map_err(|e| PipelineError::new(fs, e))?;
    let filtered = simulation_plant.select_outputs(&sensor_rows).map_err(|e| PipelineError::new(fs, e))?;
    let unfiltered = plant_in.select_outputs(&sensors).map_err(|e| PipelineError::new(fs, e))?;
    orders.push(StageOrder { stage: fs, order: filtered.order() });

    let opts = ReductionOptions::for_sample_time(cfg.sample_time);
    let (reduced, reduction) = balanced_truncate_with(&filtered, cfg.reduction_order, &opts).map_err(|e| PipelineError::new(Stage::Reduce, e))?;
    orders.push(StageOrder { stage: Stage::Reduce, order: reduced.order() });

    let discrete = discretize_zoh(&reduced, cfg.sample_time).map_err(|e| PipelineError::new(Stage::Discretize, e))?;
    orders.push(StageOrder { stage: Stage::Discretize, order: discrete.order() });

    let ds = Stage::Design;
    let nu = controls.len();
    let design_plant = discrete.select_inputs(&(0..nu).collect::<Vec<_>>()).map_err(|e| PipelineError::new(ds, e))?;
    let w = &cfg.weights;
    if w.output_weight.len() != sensors.len() || w.input_weight.len() != nu {
        return Err(PipelineError::new(ds, "weight vector lengths must match sensors and control inputs"));
    }
    let tracked_names = if cfg.tracked.is_empty() { &cfg.sensors } else { &cfg.tracked };
    let tracked = names_to_indices(tracked_names, design_plant.output_labels(), "tracked output", ds)?;
    let weights = LqgWeights::from_output_weight(
        &design_plant,
        &Matrix::diag(&w.output_weight),
        Matrix::diag(&w.input_weight),
        w.process_noise,
        w.measurement_noise,
        w.integral_weight.clone(),
    );
    let lqg = assemble_lqg(&design_plant, &weights).map_err(|e| PipelineError::new(ds, e))?;
    let lqg_integral = assemble_lqg_integral(&design_plant, &weights, &tracked).map_err(|e| PipelineError::new(ds, e))?;
    let design = DesignSummary {
        lqg_order: lqg.order,
        lqg_integral_order: lqg_integral.order,
        lqg_loop_radius: closed_loop_spectral_radius(&design_plant, &lqg.system).map_err(|e| PipelineError::new(ds, e))?,
        lqg_integral_loop_radius: closed_loop_spectral_radius(&design_plant, &lqg_integral.system).map_err(|e| PipelineError::new(ds, e))?,
    };
    orders.push(StageOrder { stage: ds, order: lqg.order });

    let part = &network.partition;
    let sign_of = |i: usize| part.inflow_sign[i];
    let command_signs = controls.iter().map(|&i| sign_of(i)).collect();
    let disturbance_sign = sign_of(dist);

    Ok(PipelineArtifacts {
        conservation,
        filtered,
        simulation_plant,
        unfiltered,
        reduced,
        reduction,
        discrete,
        design_plant,
        lqg,
        lqg_integral,
        design,
        orders,
        command_signs,
        disturbance_sign,
        network,
    })
}
