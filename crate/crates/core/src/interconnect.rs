//! Aggregation of element models and closure of the link relation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::components::{Component, ExternalKind};
use crate::linalg::{cond_1, CMatrix, Lu, Matrix};
use crate::lti::{direct_sum, eval_tf, LtiError, LtiSystem, Scope, SignalKind, SignalLabel};
use crate::netdsl::{self, count_check, resolve_bindings, Binding, NetworkDescription, ParseDiagnostic, PortCounts, PortRegistry};

/// Condition number of `I - D F` beyond which closure is refused.
pub const WELL_POSED_COND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum InterconnectError {
    Invalid(Vec<ParseDiagnostic>),
    /// `I - D F` is singular or too ill-conditioned to invert.
    AlgebraicLoop { cond: f64 },
    Lti(LtiError),
}

impl fmt::Display for InterconnectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterconnectError::Invalid(d) => {
                write!(f, "network is invalid ({} diagnostics)", d.len())?;
                for x in d {
                    write!(f, "\n  {x}")?;
                }
                Ok(())
            }
            InterconnectError::AlgebraicLoop { cond } => {
                write!(f, "algebraic loop: cond(I - D F) = {cond:e}")
            }
            InterconnectError::Lti(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for InterconnectError {}

impl From<LtiError> for InterconnectError {
    fn from(e: LtiError) -> Self {
        InterconnectError::Lti(e)
    }
}

impl From<Vec<ParseDiagnostic>> for InterconnectError {
    fn from(d: Vec<ParseDiagnostic>) -> Self {
        InterconnectError::Invalid(d)
    }
}

/// Where an aggregate input gets its value from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Route {
    /// Linked to this aggregate output.
    Internal(usize),
    /// Driven by this external input, scaled by the port gain.
    External { input: usize, gain: f64 },
}

/// Type/scope classification of every signal.
///
/// `u_*` and `z_*` index the external inputs and outputs of the closed
/// network; `*_int_*` index the aggregate's inputs (`w`) and outputs (`y`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPartition {
    pub u_p: Vec<usize>,
    pub u_q: Vec<usize>,
    pub z_p: Vec<usize>,
    pub z_q: Vec<usize>,
    pub y_int_p: Vec<usize>,
    pub y_int_q: Vec<usize>,
    pub w_int_p: Vec<usize>,
    pub w_int_q: Vec<usize>,
    /// Port-native input per unit of each external input.
    pub input_gain: Vec<f64>,
    /// Physical inflow per unit of each external flow input; 0 for pressures.
    pub inflow_sign: Vec<f64>,
    pub external_inputs: Vec<SignalLabel>,
    pub external_outputs: Vec<SignalLabel>,
    /// One entry per aggregate input.
    pub routes: Vec<Route>,
    /// Aggregate output row of each external output.
    pub z_rows: Vec<usize>,
}

impl SignalPartition {
    /// Every port of a single element treated as external, in native orientation.
    pub fn native(comp: &Component) -> Self {
        let (m, p) = (comp.system.n_inputs(), comp.system.n_outputs());
        let mut part = SignalPartition::empty(m);
        part.input_gain = alloc::vec![1.0; m];
        part.inflow_sign = alloc::vec![0.0; m];
        part.z_rows = (0..p).collect();
        part.external_inputs = comp.system.input_labels().iter().map(|l| l.clone().external()).collect();
        part.external_outputs = comp.system.output_labels().iter().map(|l| l.clone().external()).collect();
        for port in &comp.ports {
            part.routes[port.input_index] = Route::External { input: port.input_index, gain: 1.0 };
            match port.input_signal.kind {
                SignalKind::Pressure => {
                    part.u_p.push(port.input_index);
                    part.z_q.push(port.output_index);
                }
                SignalKind::Flow => {
                    part.u_q.push(port.input_index);
                    part.z_p.push(port.output_index);
                    part.inflow_sign[port.input_index] = -1.0;
                }
            }
        }
        part
    }

    fn empty(n_w: usize) -> Self {
        SignalPartition {
            u_p: Vec::new(),
            u_q: Vec::new(),
            z_p: Vec::new(),
            z_q: Vec::new(),
            y_int_p: Vec::new(),
            y_int_q: Vec::new(),
            w_int_p: Vec::new(),
            w_int_q: Vec::new(),
            input_gain: Vec::new(),
            inflow_sign: Vec::new(),
            external_inputs: Vec::new(),
            external_outputs: Vec::new(),
            routes: alloc::vec![Route::Internal(usize::MAX); n_w],
            z_rows: Vec::new(),
        }
    }

    pub fn n_external_inputs(&self) -> usize {
        self.external_inputs.len()
    }

    pub fn counts(&self) -> PortCounts {
        PortCounts {
            n_up: self.u_p.len(),
            n_uq: self.u_q.len(),
            n_zp: self.z_p.len(),
            n_zq: self.z_q.len(),
            n_yp_int: self.y_int_p.len(),
            n_yq_int: self.y_int_q.len(),
            n_wp_int: self.w_int_p.len(),
            n_wq_int: self.w_int_q.len(),
        }
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.external_inputs.iter().position(|l| l.name == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.external_outputs.iter().position(|l| l.name == name)
    }
}

/// Direct sum of all instantiated elements in declaration order, with the
/// partition induced by links and external bindings.
pub fn aggregate(desc: &NetworkDescription) -> Result<(LtiSystem, SignalPartition), InterconnectError> {
    let reg = netdsl::validate_rules(desc)?;
    aggregate_with(desc, &reg)
}

pub fn aggregate_with(desc: &NetworkDescription, reg: &PortRegistry) -> Result<(LtiSystem, SignalPartition), InterconnectError> {
    let bindings = resolve_bindings(desc, reg)?;
    let mut in_off = Vec::with_capacity(reg.components.len());
    let mut out_off = Vec::with_capacity(reg.components.len());
    let (mut wi, mut yi) = (0, 0);
    let mut prefixed = Vec::with_capacity(reg.components.len());
    for (decl, comp) in desc.components.iter().zip(&reg.components) {
        in_off.push(wi);
        out_off.push(yi);
        wi += comp.system.n_inputs();
        yi += comp.system.n_outputs();
        let ins = comp.system.input_labels().iter().map(|l| l.renamed(format!("{}.{}", decl.name, l.name))).collect();
        let outs = comp.system.output_labels().iter().map(|l| l.renamed(format!("{}.{}", decl.name, l.name))).collect();
        prefixed.push(comp.system.clone().with_labels(ins, outs)?);
    }
    let refs: Vec<&LtiSystem> = prefixed.iter().collect();
    let agg = direct_sum(&refs)?;

    let n_ext = desc.externals.len();
    let mut part = SignalPartition::empty(agg.n_inputs());
    part.input_gain = alloc::vec![0.0; n_ext];
    part.inflow_sign = alloc::vec![0.0; n_ext];
    part.z_rows = alloc::vec![0; n_ext];
    let mut ext_in: Vec<Option<SignalLabel>> = alloc::vec![None; n_ext];
    let mut ext_out: Vec<Option<SignalLabel>> = alloc::vec![None; n_ext];

    for (&(ci, pi), b) in &bindings {
        let port = &reg.components[ci].ports[pi];
        let w = in_off[ci] + port.input_index;
        let y = out_off[ci] + port.output_index;
        match *b {
            Binding::Link { peer_comp, peer_port } => {
                let peer = &reg.components[peer_comp].ports[peer_port];
                part.routes[w] = Route::Internal(out_off[peer_comp] + peer.output_index);
                match port.input_signal.kind {
                    SignalKind::Pressure => part.w_int_p.push(w),
                    SignalKind::Flow => part.w_int_q.push(w),
                }
                match port.output_signal.kind {
                    SignalKind::Pressure => part.y_int_p.push(y),
                    SignalKind::Flow => part.y_int_q.push(y),
                }
            }
            Binding::External(e) => {
                let decl = &desc.externals[e];
                let src = match decl.kind {
                    ExternalKind::PressureIn => crate::components::external_pressure_source(decl.signal.clone()),
                    ExternalKind::FlowIn => crate::components::external_flow_source(decl.signal.clone(), decl.sign),
                };
                let gain = src.port_gain();
                part.routes[w] = Route::External { input: e, gain };
                part.input_gain[e] = gain;
                part.inflow_sign[e] = if decl.kind == ExternalKind::FlowIn { src.sign } else { 0.0 };
                part.z_rows[e] = y;
                ext_in[e] = Some(SignalLabel::new(decl.signal.clone(), port.input_signal.kind, Scope::External));
                ext_out[e] = Some(SignalLabel::new(decl.output_name(), port.output_signal.kind, Scope::External));
            }
        }
    }
    for e in 0..n_ext {
        match desc.externals[e].kind {
            ExternalKind::PressureIn => {
                part.u_p.push(e);
                part.z_q.push(e);
            }
            ExternalKind::FlowIn => {
                part.u_q.push(e);
                part.z_p.push(e);
            }
        }
    }
    part.external_inputs = ext_in.into_iter().map(|l| l.expect("every external is bound")).collect();
    part.external_outputs = ext_out.into_iter().map(|l| l.expect("every external is bound")).collect();
    Ok((agg, part))
}

/// Interconnection `w = F y + G u`, output selection `z = S_y y`, and the
/// state-space equivalents `z = H x + J u` after closure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionMatrices {
    pub f: Matrix,
    pub g: Matrix,
    pub s_y: Matrix,
    pub h: Matrix,
    pub j: Matrix,
    /// 1-norm condition number of `I - D F`.
    pub cond: f64,
    pub well_posed: bool,
}

pub fn build_connection_matrices(agg: &LtiSystem, part: &SignalPartition) -> ConnectionMatrices {
    let (n_w, n_y) = (agg.n_inputs(), agg.n_outputs());
    let n_u = part.n_external_inputs();
    let mut f = Matrix::zeros(n_w, n_y);
    let mut g = Matrix::zeros(n_w, n_u);
    for (w, r) in part.routes.iter().enumerate() {
        match *r {
            Route::Internal(y) => f[(w, y)] = 1.0,
            Route::External { input, gain } => g[(w, input)] = gain,
        }
    }
    let mut s_y = Matrix::zeros(part.z_rows.len(), n_y);
    for (k, &y) in part.z_rows.iter().enumerate() {
        s_y[(k, y)] = 1.0;
    }
    let i_df = &Matrix::identity(n_y) - &(agg.d() * &f);
    let cond = cond_1(&i_df);
    let well_posed = cond < WELL_POSED_COND;
    let (h, j) = match (well_posed, Lu::new(&i_df)) {
        (true, Ok(lu)) => {
            let mc = lu.solve(agg.c());
            let mdg = lu.solve(&(agg.d() * &g));
            (&s_y * &mc, &s_y * &mdg)
        }
        _ => (Matrix::zeros(s_y.nrows(), agg.order()), Matrix::zeros(s_y.nrows(), n_u)),
    };
    ConnectionMatrices { f, g, s_y, h, j, cond, well_posed }
}

/// Closed realization with `M = (I - D F)^{-1}`:
/// `A + B F M C`, `B (G + F M D G)`, `S_y M C`, `S_y M D G`.
pub fn close_network(agg: &LtiSystem, cm: &ConnectionMatrices, part: &SignalPartition) -> Result<LtiSystem, InterconnectError> {
    if !cm.well_posed {
        return Err(InterconnectError::AlgebraicLoop { cond: cm.cond });
    }
    let n_y = agg.n_outputs();
    let i_df = &Matrix::identity(n_y) - &(agg.d() * &cm.f);
    let lu = Lu::new(&i_df).map_err(|_| InterconnectError::AlgebraicLoop { cond: cm.cond })?;
    let mc = lu.solve(agg.c());
    let mdg = lu.solve(&(agg.d() * &cm.g));
    let a = agg.a() + &(&(agg.b() * &cm.f) * &mc);
    let b = agg.b() * &(&cm.g + &(&cm.f * &mdg));
    let c = &cm.s_y * &mc;
    let d = &cm.s_y * &mdg;
    Ok(LtiSystem::new(
        a,
        b,
        c,
        d,
        agg.timebase(),
        part.external_inputs.clone(),
        part.external_outputs.clone(),
    )?)
}

/// Everything produced from a description on the way to its closed model.
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    pub registry: PortRegistry,
    pub counts: PortCounts,
    pub aggregate: LtiSystem,
    pub partition: SignalPartition,
    pub matrices: ConnectionMatrices,
    pub closed: LtiSystem,
}

/// Validate, aggregate and close in one step.
pub fn compile(desc: &NetworkDescription) -> Result<CompiledNetwork, InterconnectError> {
    let registry = netdsl::validate_rules(desc)?;
    let counts = count_check(desc, &registry)?;
    let (aggregate, partition) = aggregate_with(desc, &registry)?;
    let matrices = build_connection_matrices(&aggregate, &partition);
    let closed = close_network(&aggregate, &matrices, &partition)?;
    Ok(CompiledNetwork { registry, counts, aggregate, partition, matrices, closed })
}

/// Blocks of the connected transfer matrix:
/// `Z_p = T_pp U_p + T_pq U_q`, `Z_q = T_qp U_p + T_qq U_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfBlocks {
    pub pp: CMatrix,
    pub pq: CMatrix,
    pub qp: CMatrix,
    pub qq: CMatrix,
}

pub fn connected_tf_blocks(closed: &LtiSystem, part: &SignalPartition, s: Complex64) -> Result<TfBlocks, LtiError> {
    let t = eval_tf(closed, s)?;
    Ok(TfBlocks {
        pp: t.select(&part.z_p, &part.u_p),
        pq: t.select(&part.z_p, &part.u_q),
        qp: t.select(&part.z_q, &part.u_p),
        qq: t.select(&part.z_q, &part.u_q),
    })
}

/// Labels of the closed network's inputs that drive flows.
pub fn flow_input_names(part: &SignalPartition) -> Vec<String> {
    part.u_q.iter().map(|&i| part.external_inputs[i].name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::dc_gain;
    use crate::netdsl::parse;

    #[test]
    fn valves_in_series_add() {
        let src = "component valve V1 { R=3 }\ncomponent valve V2 { R=5 }\nlink V1.right V2.left\n\
                   external pressure_in p1 V1.left\nexternal flow_in q2 V2.right sign=-1\n";
        let net = compile(&parse(src).unwrap()).unwrap();
        assert_eq!(net.closed.order(), 0);
        // outputs: flow at V1.left, pressure at V2.right; inputs p1 and outflow q2
        let d = net.closed.d();
        assert_eq!(d[(0, 0)], 0.0);
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(1, 0)], 1.0);
        assert_eq!(d[(1, 1)], -8.0);
    }

    #[test]
    fn series_pipes_route_two_signals() {
        let p = "X=10 Dm=0.2 lambda=0.02 c=350 p_bar=2e6 q_bar=5";
        let src = alloc::format!(
            "component pipe P1 {{ {p} }}\ncomponent pipe P2 {{ {p} }}\nlink P1.right P2.left\n\
             external pressure_in pin P1.left\nexternal flow_in qout P2.right sign=-1\n"
        );
        let net = compile(&parse(&src).unwrap()).unwrap();
        assert_eq!(net.matrices.f.as_slice().iter().filter(|&&x| x == 1.0).count(), 2);
        assert_eq!(net.closed.order(), 4);
        let g = dc_gain(&net.closed).finite().unwrap();
        // flow out of the left port equals the outflow at the right port
        assert!((g[(0, 0)]).abs() < 1e-9);
        assert!((g[(0, 1)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unity_feedthrough_self_loop_is_rejected() {
        // built directly: one static block with y = w fed back to itself
        let sys = LtiSystem::static_gain(
            Matrix::from_rows(&[&[1.0]]),
            crate::lti::Timebase::Continuous,
            alloc::vec![SignalLabel::pressure("w")],
            alloc::vec![SignalLabel::pressure("y")],
        )
        .unwrap();
        let mut part = SignalPartition::empty(1);
        part.routes[0] = Route::Internal(0);
        let cm = build_connection_matrices(&sys, &part);
        assert!(!cm.well_posed);
        assert!(matches!(close_network(&sys, &cm, &part), Err(InterconnectError::AlgebraicLoop { .. })));
    }
}
