//! Mass-conserving network elements as labelled state-space systems.
//!
//! Every element exposes p-ports (pressure in, flow out) and q-ports
//! (flow in, pressure out). A p-port's flow output is mass entering the
//! element there; a q-port's flow input is mass leaving the element there.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::lti::{LtiError, LtiSystem, SignalLabel, Timebase};

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentError {
    InvalidParams(String),
    MissingParam { kind: String, key: String },
    UnknownParam { kind: String, key: String },
    UnknownKind(String),
    Lti(LtiError),
}

impl fmt::Display for ComponentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentError::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            ComponentError::MissingParam { kind, key } => {
                write!(f, "component `{kind}` requires parameter `{key}`")
            }
            ComponentError::UnknownParam { kind, key } => {
                write!(f, "component `{kind}` has no parameter `{key}`")
            }
            ComponentError::UnknownKind(k) => write!(f, "unknown component kind `{k}`"),
            ComponentError::Lti(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ComponentError {}

impl From<LtiError> for ComponentError {
    fn from(e: LtiError) -> Self {
        ComponentError::Lti(e)
    }
}

fn invalid(msg: impl Into<String>) -> ComponentError {
    ComponentError::InvalidParams(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PortKind {
    /// Pressure input, flow output.
    P,
    /// Flow input, pressure output.
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    pub port_id: String,
    pub kind: PortKind,
    pub input_signal: SignalLabel,
    pub output_signal: SignalLabel,
    /// Column of the element's `B`/`D` carrying the port input.
    pub input_index: usize,
    /// Row of the element's `C`/`D` carrying the port output.
    pub output_index: usize,
}

/// An element model together with its port table.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub system: LtiSystem,
    pub ports: Vec<PortSpec>,
    /// Structural direct-feedthrough pairs `(input index, output index)`,
    /// independent of the numerical parameter values.
    pub feedthrough: Vec<(usize, usize)>,
}

impl Component {
    pub fn port(&self, id: &str) -> Option<&PortSpec> {
        self.ports.iter().find(|p| p.port_id == id)
    }
}

/// Left p-port and right q-port with inputs `(p_l, q_r)` and outputs `(p_r, q_l)`.
fn two_port(system_parts: (Matrix, Matrix, Matrix, Matrix), feedthrough: Vec<(usize, usize)>) -> Result<Component, ComponentError> {
    let (a, b, c, d) = system_parts;
    let inputs = vec![SignalLabel::pressure("p_left"), SignalLabel::flow("q_right")];
    let outputs = vec![SignalLabel::pressure("p_right"), SignalLabel::flow("q_left")];
    let ports = vec![
        PortSpec {
            port_id: "left".into(),
            kind: PortKind::P,
            input_signal: inputs[0].clone(),
            output_signal: outputs[1].clone(),
            input_index: 0,
            output_index: 1,
        },
        PortSpec {
            port_id: "right".into(),
            kind: PortKind::Q,
            input_signal: inputs[1].clone(),
            output_signal: outputs[0].clone(),
            input_index: 1,
            output_index: 0,
        },
    ];
    let system = LtiSystem::new(a, b, c, d, Timebase::Continuous, inputs, outputs)?;
    Ok(Component { system, ports, feedthrough })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipeParams {
    /// Length (m).
    pub x: f64,
    /// Diameter (m).
    pub dm: f64,
    /// Cross-section (m^2).
    pub area: f64,
    /// Darcy friction factor.
    pub lambda: f64,
    /// Isothermal sound speed (m/s).
    pub c: f64,
    /// Nominal pressure (Pa).
    pub p_bar: f64,
    /// Nominal mass flow (kg/s).
    pub q_bar: f64,
    /// Skip the area/diameter consistency check.
    #[serde(default)]
    pub area_override: bool,
}

impl PipeParams {
    /// Circular pipe with `area = pi dm^2 / 4`.
    pub fn circular(x: f64, dm: f64, lambda: f64, c: f64, p_bar: f64, q_bar: f64) -> Self {
        PipeParams { x, dm, area: PI * dm * dm / 4.0, lambda, c, p_bar, q_bar, area_override: false }
    }

    pub fn validate(&self) -> Result<(), ComponentError> {
        let positive = [("X", self.x), ("Dm", self.dm), ("A", self.area), ("c", self.c), ("p_bar", self.p_bar)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("pipe {name} must be positive, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("pipe friction factor must be nonnegative"));
        }
        if !self.q_bar.is_finite() {
            return Err(invalid("pipe nominal flow must be finite"));
        }
        let nominal = PI * self.dm * self.dm / 4.0;
        if !self.area_override && ((self.area - nominal) / nominal).abs() > 0.01 {
            return Err(invalid(format!(
                "pipe area {} inconsistent with diameter {} (expected {nominal})",
                self.area, self.dm
            )));
        }
        Ok(())
    }

    /// `lambda c^2 / (D A)`, the friction coefficient of the momentum equation.
    fn friction(&self) -> f64 {
        self.lambda * self.c * self.c / (self.dm * self.area)
    }
}

/// Linearized isothermal pipe, states `(p_r, q_l)`.
pub fn pipe(p: &PipeParams) -> Result<Component, ComponentError> {
    p.validate()?;
    let c2 = p.c * p.c;
    let k = p.friction();
    let ratio = p.q_bar / p.p_bar;
    let a = Matrix::from_rows(&[&[0.0, c2 / (p.area * p.x)], &[-p.area / p.x, -k * ratio]]);
    let b = Matrix::from_rows(&[
        &[0.0, -c2 / (p.area * p.x)],
        &[p.area / p.x + 0.5 * k * ratio * ratio, 0.0],
    ]);
    two_port((a, b, Matrix::identity(2), Matrix::zeros(2, 2)), Vec::new())
}

/// Closed-form steady-state gain of [`pipe`].
pub fn pipe_dc_gain_closed_form(p: &PipeParams) -> Matrix {
    let c2 = p.c * p.c;
    let a2 = p.area * p.area;
    let r = p.q_bar / p.p_bar;
    Matrix::from_rows(&[
        &[1.0 + p.lambda * c2 * p.x / (2.0 * p.dm * a2) * r * r, -p.x * p.lambda * c2 / (p.dm * a2) * r],
        &[0.0, 1.0],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxLineParams {
    /// Resistance per length.
    pub r: f64,
    /// Inductance per length.
    pub l: f64,
    /// Capacitance per length.
    pub c: f64,
    /// Length.
    pub x: f64,
}

/// Lumped telegraph line, states `(v_r, i_l)`. Voltage and current are
/// typed as pressure and flow by analogy.
pub fn transmission_line(p: &TxLineParams) -> Result<Component, ComponentError> {
    for (name, v) in [("R", p.r), ("L", p.l), ("C", p.c), ("X", p.x)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("line {name} must be positive, got {v}")));
        }
    }
    let a = Matrix::from_rows(&[&[0.0, 1.0 / (p.c * p.x)], &[-1.0 / (p.l * p.x), -p.r / p.l]]);
    let b = Matrix::from_rows(&[&[0.0, -1.0 / (p.c * p.x)], &[1.0 / (p.l * p.x), 0.0]]);
    two_port((a, b, Matrix::identity(2), Matrix::zeros(2, 2)), Vec::new())
}

/// Pressure drop `p_r = p_l - R_v q`.
pub fn resistive_valve(r_v: f64) -> Result<Component, ComponentError> {
    if !(r_v >= 0.0 && r_v.is_finite()) {
        return Err(invalid("valve resistance must be nonnegative"));
    }
    let d = Matrix::from_rows(&[&[1.0, -r_v], &[0.0, 1.0]]);
    two_port(static_parts(d), vec![(0, 0), (1, 0), (1, 1)])
}

/// Pressure ratio `pi` with flow-dependent head `k_q`.
pub fn compressor_linear(pi: f64, k_q: f64) -> Result<Component, ComponentError> {
    if !(pi > 0.0 && pi.is_finite()) || !k_q.is_finite() {
        return Err(invalid("compressor ratio must be positive and slope finite"));
    }
    let d = Matrix::from_rows(&[&[pi, k_q], &[0.0, 1.0]]);
    two_port(static_parts(d), vec![(0, 0), (1, 0), (1, 1)])
}

fn static_parts(d: Matrix) -> (Matrix, Matrix, Matrix, Matrix) {
    (Matrix::zeros(0, 0), Matrix::zeros(0, 2), Matrix::zeros(2, 0), d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionParams {
    /// Volume (m^3).
    pub volume: f64,
    /// Sound speed (m/s).
    pub c: f64,
    pub q_ports: usize,
    /// Inlet resistance of each p-port (Pa s/kg).
    pub p_resistances: Vec<f64>,
}

/// Lumped volume with one pressure state. Port order: q-ports `q1..qk`,
/// then p-ports `p1..pj`, for both inputs and outputs.
pub fn junction(p: &JunctionParams) -> Result<Component, ComponentError> {
    if !(p.volume > 0.0 && p.volume.is_finite()) || !(p.c > 0.0 && p.c.is_finite()) {
        return Err(invalid("junction volume and sound speed must be positive"));
    }
    if p.q_ports == 0 {
        return Err(invalid("junction needs at least one q-port"));
    }
    if p.p_resistances.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid("junction inlet resistances must be positive"));
    }
    let k = p.q_ports;
    let j = p.p_resistances.len();
    let g = p.c * p.c / p.volume;
    let inv_r: Vec<f64> = p.p_resistances.iter().map(|r| 1.0 / r).collect();

    let a = Matrix::from_rows(&[&[-g * inv_r.iter().sum::<f64>()]]);
    let mut b = Matrix::zeros(1, k + j);
    let mut c = Matrix::zeros(k + j, 1);
    let mut d = Matrix::zeros(k + j, k + j);
    for q in 0..k {
        b[(0, q)] = -g;
        c[(q, 0)] = 1.0;
    }
    let mut feedthrough = Vec::new();
    for (i, ir) in inv_r.iter().enumerate() {
        b[(0, k + i)] = g * ir;
        c[(k + i, 0)] = -ir;
        d[(k + i, k + i)] = *ir;
        feedthrough.push((k + i, k + i));
    }

    let mut inputs = Vec::with_capacity(k + j);
    let mut outputs = Vec::with_capacity(k + j);
    let mut ports = Vec::with_capacity(k + j);
    for q in 0..k {
        let id = format!("q{}", q + 1);
        inputs.push(SignalLabel::flow(format!("q_{id}")));
        outputs.push(SignalLabel::pressure(format!("p_{id}")));
        ports.push(PortSpec {
            port_id: id,
            kind: PortKind::Q,
            input_signal: inputs[q].clone(),
            output_signal: outputs[q].clone(),
            input_index: q,
            output_index: q,
        });
    }
    for i in 0..j {
        let id = format!("p{}", i + 1);
        inputs.push(SignalLabel::pressure(format!("p_{id}")));
        outputs.push(SignalLabel::flow(format!("q_{id}")));
        ports.push(PortSpec {
            port_id: id,
            kind: PortKind::P,
            input_signal: inputs[k + i].clone(),
            output_signal: outputs[k + i].clone(),
            input_index: k + i,
            output_index: k + i,
        });
    }
    let system = LtiSystem::new(a, b, c, d, Timebase::Continuous, inputs, outputs)?;
    Ok(Component { system, ports, feedthrough })
}

/// How an external signal enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExternalKind {
    /// Drives a p-port; its flow output becomes an external output.
    PressureIn,
    /// Drives a q-port; its pressure output becomes an external output.
    FlowIn,
}

/// Boundary adapter binding an external source to one port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSource {
    pub name: String,
    pub kind: ExternalKind,
    /// Physical direction of a flow source: `+1` adds mass to the network.
    pub sign: f64,
}

pub fn external_flow_source(name: impl Into<String>, sign: f64) -> ExternalSource {
    ExternalSource { name: name.into(), kind: ExternalKind::FlowIn, sign: if sign < 0.0 { -1.0 } else { 1.0 } }
}

pub fn external_pressure_source(name: impl Into<String>) -> ExternalSource {
    ExternalSource { name: name.into(), kind: ExternalKind::PressureIn, sign: 1.0 }
}

impl ExternalSource {
    /// Gain from the declared signal to the port's native input. A q-port's
    /// flow input leaves the element, so inflow sources enter with `-sign`.
    pub fn port_gain(&self) -> f64 {
        match self.kind {
            ExternalKind::PressureIn => 1.0,
            ExternalKind::FlowIn => -self.sign,
        }
    }
}

/// Component kinds understood by [`build_component`].
pub const KINDS: [&str; 5] = ["pipe", "txline", "junction", "valve", "compressor"];

fn take(params: &BTreeMap<String, f64>, kind: &str, key: &str) -> Result<f64, ComponentError> {
    params.get(key).copied().ok_or_else(|| ComponentError::MissingParam { kind: kind.into(), key: key.into() })
}

fn check_keys(params: &BTreeMap<String, f64>, kind: &str, allowed: &dyn Fn(&str) -> bool) -> Result<(), ComponentError> {
    for key in params.keys() {
        if !allowed(key) {
            return Err(ComponentError::UnknownParam { kind: kind.into(), key: key.clone() });
        }
    }
    Ok(())
}

fn count(v: f64, what: &str) -> Result<usize, ComponentError> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e6 {
        Ok(v as usize)
    } else {
        Err(invalid(format!("{what} must be a nonnegative integer")))
    }
}

/// Instantiates a component from its kind name and parameter map.
///
/// | kind | parameters |
/// |------|------------|
/// | `pipe` | `X Dm lambda c p_bar q_bar`, optional `A` |
/// | `txline` | `R L C X` |
/// | `junction` | `V c`, optional `q_ports` (1), `p_ports` (0), `R` or `R1..Rj` |
/// | `valve` | `R` |
/// | `compressor` | `Pi`, optional `k_q` (0) |
pub fn build_component(kind: &str, params: &BTreeMap<String, f64>) -> Result<Component, ComponentError> {
    match kind {
        "pipe" => {
            check_keys(params, kind, &|k| matches!(k, "X" | "Dm" | "lambda" | "c" | "p_bar" | "q_bar" | "A"))?;
            let mut p = PipeParams::circular(
                take(params, kind, "X")?,
                take(params, kind, "Dm")?,
                take(params, kind, "lambda")?,
                take(params, kind, "c")?,
                take(params, kind, "p_bar")?,
                take(params, kind, "q_bar")?,
            );
            if let Some(&a) = params.get("A") {
                p.area = a;
            }
            pipe(&p)
        }
        "txline" => {
            check_keys(params, kind, &|k| matches!(k, "R" | "L" | "C" | "X"))?;
            transmission_line(&TxLineParams {
                r: take(params, kind, "R")?,
                l: take(params, kind, "L")?,
                c: take(params, kind, "C")?,
                x: take(params, kind, "X")?,
            })
        }
        "junction" => {
            let q_ports = count(params.get("q_ports").copied().unwrap_or(1.0), "q_ports")?;
            let p_ports = count(params.get("p_ports").copied().unwrap_or(0.0), "p_ports")?;
            check_keys(params, kind, &|k| {
                matches!(k, "V" | "c" | "q_ports" | "p_ports" | "R")
                    || k.strip_prefix('R').and_then(|n| n.parse::<usize>().ok()).is_some_and(|n| n >= 1 && n <= p_ports)
            })?;
            let mut p_resistances = Vec::with_capacity(p_ports);
            for i in 1..=p_ports {
                let key = format!("R{i}");
                let r = match params.get(&key) {
                    Some(&r) => r,
                    None => take(params, kind, "R")?,
                };
                p_resistances.push(r);
            }
            junction(&JunctionParams { volume: take(params, kind, "V")?, c: take(params, kind, "c")?, q_ports, p_resistances })
        }
        "valve" => {
            check_keys(params, kind, &|k| k == "R")?;
            resistive_valve(take(params, kind, "R")?)
        }
        "compressor" => {
            check_keys(params, kind, &|k| matches!(k, "Pi" | "k_q"))?;
            compressor_linear(take(params, kind, "Pi")?, params.get("k_q").copied().unwrap_or(0.0))
        }
        other => Err(ComponentError::UnknownKind(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{dc_gain, poles};

    #[test]
    fn frictionless_pipe_has_identity_dc_gain() {
        let p = PipeParams::circular(10.0, 0.2, 0.0, 392.7, 2e6, 5.0);
        let g = dc_gain(&pipe(&p).unwrap().system).finite().unwrap();
        assert!((&g - &Matrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn pipe_resonance_near_six_hz() {
        let mut p = PipeParams::circular(10.0, 0.2, 0.02, 392.7, 2e6, 5.0);
        p.area = 0.0314;
        let ps = poles(&pipe(&p).unwrap().system).unwrap();
        let f = ps[0].im.abs() / (2.0 * PI);
        assert!((f - 6.2492).abs() < 1e-3, "{f}");
    }

    #[test]
    fn junction_split_is_symmetric() {
        let j = junction(&JunctionParams { volume: 2.0, c: 350.0, q_ports: 1, p_resistances: vec![1e4, 1e4] }).unwrap();
        let g = dc_gain(&j.system).finite().unwrap();
        assert!((g[(1, 0)] - 0.5).abs() < 1e-12);
        assert!((g[(2, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn junction_without_inlets_integrates() {
        let j = junction(&JunctionParams { volume: 1.0, c: 300.0, q_ports: 2, p_resistances: vec![] }).unwrap();
        assert_eq!(j.system.a()[(0, 0)], 0.0);
        assert!(dc_gain(&j.system).has_pole_at_zero());
    }

    #[test]
    fn build_rejects_unknown_keys() {
        let mut m = BTreeMap::new();
        m.insert("R".to_string(), 1.0);
        m.insert("bogus".to_string(), 1.0);
        assert!(matches!(build_component("valve", &m), Err(ComponentError::UnknownParam { .. })));
        assert!(matches!(build_component("widget", &m), Err(ComponentError::UnknownKind(_))));
    }
}
