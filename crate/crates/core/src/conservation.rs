//! Numerical certificates of mass conservation and of the integrator that
//! conservation implies for flow-driven networks.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::interconnect::{CompiledNetwork, SignalPartition};
use crate::linalg::{svd, Matrix};
use crate::lti::{classify_limit, eval_tf, poles, simulate, DcEntry, LtiError, LtiSystem, Timebase, DC_SWEEP};

pub const TOL_QQ: f64 = 1e-6;
pub const TOL_QP: f64 = 1e-5;
/// Minimum log-log decay slope of `T_qp` near the origin.
pub const BLOCKING_SLOPE: f64 = 0.9;
/// Relative singular value threshold of the detectability rank test.
pub const RANK_RTOL: f64 = 1e-8;
/// Eigenvalues with modulus at most this are counted as integrators.
pub const INTEGRATOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum ConservationError {
    /// Every sweep point coincides with a pole.
    SingularAtS,
    NotContinuous,
    Lti(LtiError),
}

impl fmt::Display for ConservationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConservationError::SingularAtS => write!(f, "transfer matrix singular at every sweep point"),
            ConservationError::NotContinuous => write!(f, "conservation checks need a continuous-time model"),
            ConservationError::Lti(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ConservationError {}

impl From<LtiError> for ConservationError {
    fn from(e: LtiError) -> Self {
        ConservationError::Lti(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    /// `|| 1^T T_qq(eps) - 1^T ||_inf`
    pub qq_row_residual: f64,
    /// `|| T_qp(eps) ||_inf`
    pub qp_norm: f64,
    /// `|| 1^T T_qp(eps) ||_inf`, the net flow drawn by pressure inputs.
    pub qp_net_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub conserves_mass: bool,
    /// False when the network has no external flow outputs, so the limit
    /// relation cannot be formed.
    pub applicable: bool,
    /// Residual at the smallest sweep frequency.
    pub qq_row_residual: f64,
    /// Norm at the smallest sweep frequency.
    pub qp_norm: f64,
    /// Net-flow form at the smallest sweep frequency. With two or more
    /// pressure inputs a pressure difference drives a through-flow, so only
    /// this column-sum form can vanish.
    pub qp_net_norm: f64,
    /// An integrator acts inside `T_qq` or `T_qp`.
    pub pole_at_zero: bool,
    pub sweep: Vec<SweepPoint>,
    pub tol_qq: f64,
    pub tol_qp: f64,
}

fn tf_native(sys: &LtiSystem, part: &SignalPartition, eps: f64) -> Result<Matrix, LtiError> {
    let mut t = eval_tf(sys, Complex64::new(eps, 0.0))?.re();
    for (j, g) in part.input_gain.iter().enumerate() {
        if *g != 0.0 && *g != 1.0 {
            for i in 0..t.nrows() {
                t[(i, j)] /= *g;
            }
        }
    }
    Ok(t)
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)]).sum()).collect()
}

fn inf_norm(m: &Matrix) -> f64 {
    m.norm_inf()
}

/// Tests `1^T T_qq(0) = 1^T` and `T_qp(0) = 0` on the frequency sweep, in
/// port-native orientation (flow inputs leave the network, flow outputs
/// enter it).
pub fn check_conservation(sys: &LtiSystem, part: &SignalPartition) -> Result<ConservationReport, ConservationError> {
    if !sys.timebase().is_continuous() {
        return Err(ConservationError::NotContinuous);
    }
    let applicable = !part.z_q.is_empty();
    let mut sweep = Vec::new();
    let mut blocks = Vec::new();
    for &eps in &DC_SWEEP {
        let Ok(t) = tf_native(sys, part, eps) else { continue };
        let qq = t.select(&part.z_q, &part.u_q);
        let qp = t.select(&part.z_q, &part.u_p);
        let resid = column_sums(&qq).iter().fold(0.0f64, |m, c| m.max((c - 1.0).abs()));
        let net = column_sums(&qp).iter().fold(0.0f64, |m, c| m.max(c.abs()));
        sweep.push(SweepPoint { eps, qq_row_residual: resid, qp_norm: inf_norm(&qp), qp_net_norm: net });
        blocks.push((qq, qp));
    }
    if sweep.is_empty() {
        return Err(ConservationError::SingularAtS);
    }
    let mut pole_at_zero = false;
    if blocks.len() == DC_SWEEP.len() {
        for pick in [0usize, 1] {
            let m = |k: usize| if pick == 0 { &blocks[k].0 } else { &blocks[k].1 };
            for i in 0..m(0).nrows() {
                for j in 0..m(0).ncols() {
                    if classify_limit(m(0)[(i, j)], m(1)[(i, j)], m(2)[(i, j)]) == DcEntry::PoleAtZero {
                        pole_at_zero = true;
                    }
                }
            }
        }
    }
    let last = *sweep.last().expect("nonempty");
    let first = sweep[0];
    let trend_ok = last.qq_row_residual <= first.qq_row_residual + 1e-9 && last.qp_norm <= first.qp_norm + 1e-9;
    let conserves_mass = applicable
        && !pole_at_zero
        && trend_ok
        && last.qq_row_residual <= TOL_QQ
        && last.qp_norm <= TOL_QP;
    Ok(ConservationReport {
        conserves_mass,
        applicable,
        qq_row_residual: last.qq_row_residual,
        qp_norm: last.qp_norm,
        qp_net_norm: last.qp_net_norm,
        pole_at_zero,
        sweep,
        tol_qq: TOL_QQ,
        tol_qp: TOL_QP,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockingZero {
    /// The network has no pressure inputs.
    NotApplicable,
    Checked {
        passes: bool,
        /// Least-squares slope of `log ||T_qp||` against `log eps`.
        slope: f64,
        norms: Vec<(f64, f64)>,
    },
}

impl BlockingZero {
    pub fn passes(&self) -> bool {
        matches!(self, BlockingZero::Checked { passes: true, .. })
    }
}

/// First-order vanishing of `T_qp` at the origin.
pub fn check_blocking_zero_qp(sys: &LtiSystem, part: &SignalPartition) -> Result<BlockingZero, ConservationError> {
    if part.u_p.is_empty() {
        return Ok(BlockingZero::NotApplicable);
    }
    let mut norms = Vec::new();
    for &eps in &DC_SWEEP {
        let t = tf_native(sys, part, eps)?;
        norms.push((eps, inf_norm(&t.select(&part.z_q, &part.u_p))));
    }
    let identically_small = norms.iter().all(|&(_, n)| n < 1e-12);
    let pts: Vec<(f64, f64)> = norms.iter().map(|&(e, n)| (e.ln(), n.max(f64::MIN_POSITIVE).ln())).collect();
    let (slope, _, _) = linear_fit(&pts);
    Ok(BlockingZero::Checked { passes: identically_small || slope >= BLOCKING_SLOPE, slope, norms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityReport {
    pub applicable: bool,
    pub rank: usize,
    pub required: usize,
    pub full_rank: bool,
    pub singular_values: Vec<f64>,
}

/// Rank at `s = 0` of the block of `sys` from inputs `cols` to outputs `rows`.
/// Entries with a finite limit are extrapolated to the origin; divergent
/// entries keep their value at the smallest sweep frequency.
pub fn dc_block_rank(sys: &LtiSystem, rows: &[usize], cols: &[usize]) -> Result<DetectabilityReport, ConservationError> {
    let required = rows.len().min(cols.len());
    if required == 0 {
        return Ok(DetectabilityReport { applicable: false, rank: 0, required, full_rank: false, singular_values: Vec::new() });
    }
    let mut samples = Vec::new();
    for &eps in &DC_SWEEP {
        let s = match sys.timebase() {
            Timebase::Continuous => Complex64::new(eps, 0.0),
            Timebase::Discrete(_) => Complex64::new(1.0 + eps, 0.0),
        };
        samples.push(eval_tf(sys, s)?.re().select(rows, cols));
    }
    let m = Matrix::from_fn(rows.len(), cols.len(), |i, j| {
        match classify_limit(samples[0][(i, j)], samples[1][(i, j)], samples[2][(i, j)]) {
            DcEntry::Finite(v) => v,
            DcEntry::PoleAtZero => samples[2][(i, j)],
        }
    });
    let d = svd(&m);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let rank = d.s.iter().filter(|&&x| x > RANK_RTOL * smax.max(1.0)).count();
    Ok(DetectabilityReport { applicable: true, rank, required, full_rank: rank == required, singular_values: d.s })
}

/// Rank of the unconnected block from internal flow inputs to external
/// pressure outputs: measured pressures must reveal internal flow mismatch.
pub fn check_detectability_rank(aggregate: &LtiSystem, part: &SignalPartition) -> Result<DetectabilityReport, ConservationError> {
    let rows: Vec<usize> = part.z_p.iter().map(|&k| part.z_rows[k]).collect();
    let mut r = dc_block_rank(aggregate, &rows, &part.w_int_q)?;
    if part.w_int_q.is_empty() {
        r.applicable = false;
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorReport {
    pub zero_pole_count: usize,
    pub zero_pole_tolerance: f64,
    /// All remaining eigenvalues lie in the open left half-plane.
    pub others_stable: bool,
    /// Unit left null vector of `A` (largest entry positive).
    pub left_direction: Vec<f64>,
    pub detectable: Option<bool>,
    /// Steepest external pressure slope (Pa/s) under unit net inflow.
    pub ramp_slope: f64,
    /// Coefficient of determination of the ramp's tail fit.
    pub ramp_r2: f64,
    /// Pressures settle under a balanced inflow/outflow pair.
    pub balanced_bounded: bool,
}

/// Horizon of the imbalance ramp test (s).
pub const RAMP_HORIZON: f64 = 50.0;

pub fn detect_integrator(closed: &LtiSystem, part: &SignalPartition) -> Result<IntegratorReport, ConservationError> {
    if !closed.timebase().is_continuous() {
        return Err(ConservationError::NotContinuous);
    }
    let ps = poles(closed)?;
    let zero_pole_count = ps.iter().filter(|l| l.norm() <= INTEGRATOR_TOL).count();
    let others_stable = ps.iter().filter(|l| l.norm() > INTEGRATOR_TOL).all(|l| l.re < 0.0);
    let n = closed.order();
    let left_direction = if n == 0 {
        Vec::new()
    } else {
        let d = svd(&closed.a().transpose());
        let mut v = d.v.col_vec(n - 1);
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };

    let flows: Vec<usize> = part.u_q.iter().copied().filter(|&k| part.inflow_sign[k] != 0.0).collect();
    let z_p: Vec<usize> = part.z_p.clone();
    let (mut ramp_slope, mut ramp_r2) = (0.0, 0.0);
    let mut balanced_bounded = true;
    if let Some(&k0) = flows.first() {
        let dt = 0.05;
        let steps = (RAMP_HORIZON / dt).round() as usize + 1;
        let mut u = Matrix::zeros(steps, closed.n_inputs());
        for r in 0..steps {
            u[(r, k0)] = 1.0 / part.inflow_sign[k0];
        }
        let tr = simulate(closed, &u, dt)?;
        let tail = steps / 2;
        for &j in &z_p {
            let pts: Vec<(f64, f64)> = (tail..steps).map(|r| (r as f64 * dt, tr.outputs[(r, j)])).collect();
            let (slope, _, r2) = linear_fit(&pts);
            if slope.abs() > ramp_slope.abs() {
                ramp_slope = slope;
                ramp_r2 = r2;
            }
        }
        if let Some(&k1) = flows.get(1) {
            let slowest = ps
                .iter()
                .filter(|l| l.norm() > INTEGRATOR_TOL && l.re < 0.0)
                .map(|l| -l.re)
                .fold(f64::INFINITY, f64::min);
            let horizon = if slowest.is_finite() { 10.0 / slowest } else { RAMP_HORIZON };
            let steps = 2000;
            let dt = horizon / steps as f64;
            let mut u = Matrix::zeros(steps, closed.n_inputs());
            for r in 0..steps {
                u[(r, k0)] = 1.0 / part.inflow_sign[k0];
                u[(r, k1)] = -1.0 / part.inflow_sign[k1];
            }
            let tr = simulate(closed, &u, dt)?;
            for &j in &z_p {
                let col: Vec<f64> = (0..steps).map(|r| tr.outputs[(r, j)]).collect();
                let peak = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let tail = &col[steps - steps / 10..];
                let spread = tail.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
                    - tail.iter().fold(f64::INFINITY, |m, &x| m.min(x));
                if spread > 1e-3 * peak.max(f64::MIN_POSITIVE) {
                    balanced_bounded = false;
                }
            }
        }
    }
    Ok(IntegratorReport {
        zero_pole_count,
        zero_pole_tolerance: INTEGRATOR_TOL,
        others_stable,
        left_direction,
        detectable: None,
        ramp_slope,
        ramp_r2,
        balanced_bounded,
    })
}

/// [`detect_integrator`] on a compiled network, with the detectability
/// verdict filled in from its unconnected model.
pub fn analyze_integrator(net: &CompiledNetwork) -> Result<IntegratorReport, ConservationError> {
    let mut r = detect_integrator(&net.closed, &net.partition)?;
    let d = check_detectability_rank(&net.aggregate, &net.partition)?;
    r.detectable = d.applicable.then_some(d.full_rank);
    Ok(r)
}

/// Least-squares line through `(x, y)` points: `(slope, intercept, r^2)`.
/// A constant series has `r^2 = 1`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, pts.first().map(|p| p.1).unwrap_or(0.0), 1.0);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Conservation report of a single element with every port external.
pub fn check_component(comp: &crate::components::Component) -> Result<ConservationReport, ConservationError> {
    check_conservation(&comp.system, &SignalPartition::native(comp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{junction, pipe, JunctionParams, PipeParams};

    #[test]
    fn pipe_conserves_and_perturbed_pipe_does_not() {
        let p = pipe(&PipeParams::circular(10.0, 0.2, 0.02, 350.0, 2e6, 5.0)).unwrap();
        let r = check_component(&p).unwrap();
        assert!(r.conserves_mass, "{r:?}");
        let mut b = p.system.b().clone();
        b[(0, 1)] *= 1.01;
        let bad = LtiSystem::new(
            p.system.a().clone(),
            b,
            p.system.c().clone(),
            p.system.d().clone(),
            Timebase::Continuous,
            p.system.input_labels().to_vec(),
            p.system.output_labels().to_vec(),
        )
        .unwrap();
        let r = check_conservation(&bad, &SignalPartition::native(&p)).unwrap();
        assert!(!r.conserves_mass);
    }

    #[test]
    fn junction_single_inlet() {
        let j = junction(&JunctionParams { volume: 1.0, c: 300.0, q_ports: 1, p_resistances: vec![5e3] }).unwrap();
        let r = check_component(&j).unwrap();
        assert!(r.conserves_mass, "{r:?}");
        assert!(check_blocking_zero_qp(&j.system, &SignalPartition::native(&j)).unwrap().passes());
    }

    #[test]
    fn pipe_rank_depends_on_friction() {
        let with = pipe(&PipeParams::circular(10.0, 0.2, 0.02, 350.0, 2e6, 5.0)).unwrap();
        let without = pipe(&PipeParams::circular(10.0, 0.2, 0.0, 350.0, 2e6, 5.0)).unwrap();
        assert!(dc_block_rank(&with.system, &[0], &[1]).unwrap().full_rank);
        assert!(!dc_block_rank(&without.system, &[0], &[1]).unwrap().full_rank);
    }

    #[test]
    fn lone_volume_is_one_integrator() {
        let j = junction(&JunctionParams { volume: 1.0, c: 300.0, q_ports: 2, p_resistances: vec![] }).unwrap();
        let r = detect_integrator(&j.system, &SignalPartition::native(&j)).unwrap();
        assert_eq!(r.zero_pole_count, 1);
        assert!(r.ramp_r2 > 0.999);
        assert!(r.balanced_bounded);
    }

    #[test]
    fn fit_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let (m, b, r2) = linear_fit(&pts);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
