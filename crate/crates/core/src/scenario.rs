//! Sampled-data simulation of a continuous plant under a discrete controller.
//!
//! The controller output is held over each sample period; the plant is
//! propagated exactly with the zero-order-hold transition matrices on a finer
//! substep grid, which is also the grid the trace is recorded on.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::lti::{zoh_matrices, LtiError, LtiSystem, Timebase};

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    DimensionMismatch(&'static str),
    InvalidSettings(&'static str),
    /// The settled window still drifts by this relative amount.
    NotSettled { drift: f64 },
    Lti(LtiError),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            ScenarioError::InvalidSettings(m) => write!(f, "invalid simulation settings: {m}"),
            ScenarioError::NotSettled { drift } => {
                write!(f, "trace has not settled (relative drift {drift:e} in the final window)")
            }
            ScenarioError::Lti(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ScenarioError {}

impl From<LtiError> for ScenarioError {
    fn from(e: LtiError) -> Self {
        ScenarioError::Lti(e)
    }
}

/// Which plant signals the controller reads and drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopWiring {
    /// Plant input driven by each controller output.
    pub control_inputs: Vec<usize>,
    /// Plant output read by each controller input.
    pub measured_outputs: Vec<usize>,
    pub disturbance_input: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub sample_time: f64,
    pub substeps: usize,
    pub horizon: f64,
    pub disturbance_magnitude: f64,
    pub step_time: f64,
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return Err(ScenarioError::InvalidSettings("sample time must be positive"));
        }
        if self.substeps < 10 {
            return Err(ScenarioError::InvalidSettings("at least 10 substeps per sample are required"));
        }
        if !(self.horizon > self.step_time && self.horizon.is_finite()) {
            return Err(ScenarioError::InvalidSettings("horizon must exceed the step time"));
        }
        if !(self.step_time >= 0.0) || !self.disturbance_magnitude.is_finite() {
            return Err(ScenarioError::InvalidSettings("step time and magnitude must be finite"));
        }
        Ok(())
    }
}

/// Signals on the substep grid; row `j` of each matrix is time `time[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub time: Vec<f64>,
    pub output_names: Vec<String>,
    pub outputs: Matrix,
    pub command_names: Vec<String>,
    pub commands: Matrix,
    pub disturbance_name: String,
    pub disturbance: Vec<f64>,
    /// Euclidean norm of the controller state held at each time.
    pub controller_state_norm: Vec<f64>,
}

impl ScenarioTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn output(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.output_names.iter().position(|n| n == name)?;
        Some(self.outputs.col_vec(j))
    }

    /// Rows at the sample instants `k * ts`.
    pub fn sample_rows(&self, substeps: usize) -> Vec<usize> {
        (0..self.len()).step_by(substeps.max(1)).collect()
    }
}

/// Runs the loop from rest. With `controller = None` the commands stay at zero.
pub fn simulate_closed_loop(
    plant: &LtiSystem,
    controller: Option<&LtiSystem>,
    wiring: &LoopWiring,
    settings: &SimulationSettings,
) -> Result<ScenarioTrace, ScenarioError> {
    settings.validate()?;
    if !plant.timebase().is_continuous() {
        return Err(LtiError::NotContinuous.into());
    }
    let (m, p) = (plant.n_inputs(), plant.n_outputs());
    if wiring.disturbance_input >= m
        || wiring.control_inputs.iter().any(|&i| i >= m || i == wiring.disturbance_input)
        || wiring.measured_outputs.iter().any(|&o| o >= p)
    {
        return Err(ScenarioError::DimensionMismatch("loop wiring indices"));
    }
    let nu = wiring.control_inputs.len();
    let ny = wiring.measured_outputs.len();
    for &o in &wiring.measured_outputs {
        if wiring.control_inputs.iter().any(|&i| plant.d()[(o, i)] != 0.0) {
            return Err(ScenarioError::DimensionMismatch("measured outputs must not feed through control inputs"));
        }
    }
    let nc = match controller {
        Some(c) => {
            if c.n_inputs() != ny || c.n_outputs() != nu {
                return Err(ScenarioError::DimensionMismatch("controller signal widths"));
            }
            match c.timebase() {
                Timebase::Discrete(ts) if (ts - settings.sample_time).abs() <= 1e-12 * ts => {}
                _ => return Err(ScenarioError::DimensionMismatch("controller sample time")),
            }
            c.order()
        }
        None => 0,
    };

    let n = plant.order();
    let dt = settings.sample_time / settings.substeps as f64;
    let (phi, gamma) = zoh_matrices(plant.a(), plant.b(), dt)?;
    let samples = (settings.horizon / settings.sample_time).round() as usize;
    let rows = samples * settings.substeps + 1;
    let step_index = settings.step_time / dt;
    let step_row = step_index.floor() as usize;
    let step_frac = step_index - step_row as f64;

    let mut x = vec![0.0; n];
    let mut xi = vec![0.0; nc];
    let mut u_plant = vec![0.0; m];
    let mut cmd = vec![0.0; nu];
    let mut time = Vec::with_capacity(rows);
    let mut outputs = Matrix::zeros(rows, p);
    let mut commands = Matrix::zeros(rows, nu);
    let mut dist = Vec::with_capacity(rows);
    let mut xi_norm = Vec::with_capacity(rows);
    let d_of = |j: usize| if j > step_row || (j == step_row && step_frac == 0.0) { settings.disturbance_magnitude } else { 0.0 };

    for j in 0..rows {
        let t = j as f64 * dt;
        u_plant[wiring.disturbance_input] = d_of(j);
        if j % settings.substeps == 0 {
            if let Some(c) = controller {
                let y = plant.c().mul_vec(&x);
                let meas: Vec<f64> = wiring
                    .measured_outputs
                    .iter()
                    .map(|&o| y[o] + plant.d()[(o, wiring.disturbance_input)] * u_plant[wiring.disturbance_input])
                    .collect();
                let cx = c.c().mul_vec(&xi);
                let dy = c.d().mul_vec(&meas);
                for k in 0..nu {
                    cmd[k] = cx[k] + dy[k];
                }
                let ax = c.a().mul_vec(&xi);
                let by = c.b().mul_vec(&meas);
                xi_norm.push(norm(&xi));
                for k in 0..nc {
                    xi[k] = ax[k] + by[k];
                }
            } else {
                xi_norm.push(0.0);
            }
            for (k, &i) in wiring.control_inputs.iter().enumerate() {
                u_plant[i] = cmd[k];
            }
        } else {
            let last = *xi_norm.last().unwrap_or(&0.0);
            xi_norm.push(last);
        }
        let y = &plant.c().mul_vec(&x);
        let du = plant.d().mul_vec(&u_plant);
        for o in 0..p {
            outputs[(j, o)] = y[o] + du[o];
        }
        for k in 0..nu {
            commands[(j, k)] = cmd[k];
        }
        dist.push(u_plant[wiring.disturbance_input]);
        time.push(t);

        if j + 1 < rows {
            if j == step_row && step_frac > 0.0 {
                // The step falls inside this substep: split it exactly.
                let (p1, g1) = zoh_matrices(plant.a(), plant.b(), step_frac * dt)?;
                let (p2, g2) = zoh_matrices(plant.a(), plant.b(), (1.0 - step_frac) * dt)?;
                x = advance(&p1, &g1, &x, &u_plant);
                u_plant[wiring.disturbance_input] = settings.disturbance_magnitude;
                x = advance(&p2, &g2, &x, &u_plant);
            } else {
                x = advance(&phi, &gamma, &x, &u_plant);
            }
        }
    }

    Ok(ScenarioTrace {
        time,
        output_names: plant.output_labels().iter().map(|l| l.name.clone()).collect(),
        outputs,
        command_names: wiring.control_inputs.iter().map(|&i| plant.input_labels()[i].name.clone()).collect(),
        commands,
        disturbance_name: plant.input_labels()[wiring.disturbance_input].name.clone(),
        disturbance: dist,
        controller_state_norm: xi_norm,
    })
}

fn advance(phi: &Matrix, gamma: &Matrix, x: &[f64], u: &[f64]) -> Vec<f64> {
    let a = phi.mul_vec(x);
    let b = gamma.mul_vec(u);
    a.iter().zip(&b).map(|(p, q)| p + q).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub const SETTLE_FRACTION: f64 = 0.1;
pub const SETTLE_DRIFT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `|mean(net commanded inflow + disturbance inflow)|` over the window.
    pub residual: f64,
    pub commanded_inflow: f64,
    pub disturbance_inflow: f64,
    pub window_start: f64,
    pub drift: f64,
}

/// Largest relative spread of any output or command over the final
/// `SETTLE_FRACTION` of the trace, relative to that signal's peak;
/// infinite when any sample is not finite.
pub fn settled_drift(trace: &ScenarioTrace) -> f64 {
    let len = trace.len();
    if len == 0 {
        return 0.0;
    }
    let start = window_start(len);
    let mut worst: f64 = 0.0;
    for mat in [&trace.outputs, &trace.commands] {
        for j in 0..mat.ncols() {
            let col = mat.col_vec(j);
            if col.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let peak = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if peak == 0.0 {
                continue;
            }
            let (lo, hi) = col[start..].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            worst = worst.max((hi - lo) / peak);
        }
    }
    worst
}

fn window_start(len: usize) -> usize {
    let w = ((len as f64) * SETTLE_FRACTION).ceil() as usize;
    len - w.clamp(1, len)
}

/// Steady-state mass balance between commanded flows and the disturbance.
/// `command_signs` and `disturbance_sign` convert each signal into a
/// physical inflow.
pub fn steady_state_balance(trace: &ScenarioTrace, command_signs: &[f64], disturbance_sign: f64) -> Result<BalanceReport, ScenarioError> {
    if command_signs.len() != trace.commands.ncols() {
        return Err(ScenarioError::DimensionMismatch("command sign count"));
    }
    if trace.is_empty() {
        return Err(ScenarioError::NotSettled { drift: f64::INFINITY });
    }
    let drift = settled_drift(trace);
    if !(drift <= SETTLE_DRIFT) {
        return Err(ScenarioError::NotSettled { drift });
    }
    let start = window_start(trace.len());
    let count = (trace.len() - start) as f64;
    let mut cmd = 0.0;
    let mut dist = 0.0;
    for j in start..trace.len() {
        cmd += trace.commands.row(j).iter().zip(command_signs).map(|(u, s)| u * s).sum::<f64>();
        dist += trace.disturbance[j] * disturbance_sign;
    }
    let (cmd, dist) = (cmd / count, dist / count);
    Ok(BalanceReport { residual: (cmd + dist).abs(), commanded_inflow: cmd, disturbance_inflow: dist, window_start: trace.time[start], drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::SignalLabel;

    fn tank() -> LtiSystem {
        // Two inflows into one volume; output is the level.
        LtiSystem::new(
            Matrix::from_rows(&[&[0.0]]),
            Matrix::from_rows(&[&[1.0, -1.0]]),
            Matrix::from_rows(&[&[1.0]]),
            Matrix::zeros(1, 2),
            Timebase::Continuous,
            vec![SignalLabel::flow("q_in"), SignalLabel::flow("q_out")],
            vec![SignalLabel::pressure("p")],
        )
        .unwrap()
    }

    fn settings() -> SimulationSettings {
        SimulationSettings { sample_time: 1.0, substeps: 10, horizon: 200.0, disturbance_magnitude: 1.0, step_time: 0.5 }
    }

    fn p_controller(gain: f64) -> LtiSystem {
        LtiSystem::static_gain(
            Matrix::from_rows(&[&[-gain]]),
            Timebase::Discrete(1.0),
            vec![SignalLabel::pressure("p")],
            vec![SignalLabel::flow("q_in")],
        )
        .unwrap()
    }

    fn wiring() -> LoopWiring {
        LoopWiring { control_inputs: vec![0], measured_outputs: vec![0], disturbance_input: 1 }
    }

    #[test]
    fn zero_disturbance_gives_zero_trace() {
        let mut s = settings();
        s.disturbance_magnitude = 0.0;
        let tr = simulate_closed_loop(&tank(), Some(&p_controller(0.5)), &wiring(), &s).unwrap();
        assert!(tr.outputs.max_abs() == 0.0 && tr.commands.max_abs() == 0.0);
        assert!(tr.time.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn proportional_loop_balances() {
        let tr = simulate_closed_loop(&tank(), Some(&p_controller(0.5)), &wiring(), &settings()).unwrap();
        let b = steady_state_balance(&tr, &[1.0], -1.0).unwrap();
        assert!(b.residual < 1e-9, "{b:?}");
        // Offset of a proportional loop: q_in = 1 = 0.5 p.
        assert!((tr.outputs[(tr.len() - 1, 0)] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn open_loop_does_not_settle() {
        let tr = simulate_closed_loop(&tank(), None, &wiring(), &settings()).unwrap();
        assert!(matches!(steady_state_balance(&tr, &[1.0], -1.0), Err(ScenarioError::NotSettled { .. })));
        let last = tr.outputs[(tr.len() - 1, 0)];
        assert!((last + 199.5).abs() < 1e-9, "{last}");
    }

    #[test]
    fn step_inside_substep_is_exact() {
        let mut s = settings();
        s.step_time = 0.537;
        let tr = simulate_closed_loop(&tank(), None, &wiring(), &s).unwrap();
        let last = tr.outputs[(tr.len() - 1, 0)];
        assert!((last + (200.0 - 0.537)).abs() < 1e-9, "{last}");
    }

    #[test]
    fn rejects_bad_settings() {
        let mut s = settings();
        s.substeps = 5;
        assert!(simulate_closed_loop(&tank(), None, &wiring(), &s).is_err());
        let w = LoopWiring { control_inputs: vec![1], measured_outputs: vec![0], disturbance_input: 1 };
        assert!(simulate_closed_loop(&tank(), None, &w, &settings()).is_err());
    }
}
