//! Discrete-time LQG synthesis with a current (filtering) estimator, with and
//! without integral action on selected outputs.
//!
//! The Riccati equation is solved by the structure-preserving doubling
//! algorithm and the result is accepted only after a residual check.

use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{eigenvalues, LinalgError, Lu, Matrix};
use crate::lti::{LtiError, LtiSystem, SignalLabel, Timebase};

pub const DARE_RESIDUAL_TOL: f64 = 1e-9;
const SDA_MAX_ITER: usize = 80;
const SDA_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum LqgError {
    NotStabilizable,
    NotDetectable,
    NotStrictlyProper,
    NotDiscrete,
    InvalidWeights(&'static str),
    DimensionMismatch(&'static str),
    Lti(LtiError),
}

impl fmt::Display for LqgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LqgError::NotStabilizable => write!(f, "no stabilizing Riccati solution (pair not stabilizable)"),
            LqgError::NotDetectable => write!(f, "no stabilizing filter Riccati solution (pair not detectable)"),
            LqgError::NotStrictlyProper => write!(f, "plant must have zero feedthrough"),
            LqgError::NotDiscrete => write!(f, "plant must be discrete-time"),
            LqgError::InvalidWeights(m) => write!(f, "invalid weights: {m}"),
            LqgError::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            LqgError::Lti(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for LqgError {}

impl From<LtiError> for LqgError {
    fn from(e: LtiError) -> Self {
        LqgError::Lti(e)
    }
}

impl From<LinalgError> for LqgError {
    fn from(e: LinalgError) -> Self {
        LqgError::Lti(LtiError::Linalg(e))
    }
}

/// Stabilizing solution of
/// `P = A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + Q`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, LqgError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(LqgError::DimensionMismatch("riccati operands"));
    }
    let rinv_bt = Lu::new(r).map_err(|_| LqgError::InvalidWeights("R is singular"))?.solve(&b.transpose());
    let mut ak = a.clone();
    let mut gk = (b * &rinv_bt).symmetrize();
    let mut hk = q.symmetrize();
    let eye = Matrix::identity(n);
    let mut converged = false;
    for _ in 0..SDA_MAX_ITER {
        let w = &eye + &(&gk * &hk);
        let lu = Lu::new(&w).map_err(|_| LqgError::NotStabilizable)?;
        let wa = lu.solve(&ak);
        let wg = lu.solve(&gk);
        let a_next = &ak * &wa;
        let g_next = (&gk + &(&(&ak * &wg) * &ak.transpose())).symmetrize();
        let h_next = (&hk + &(&(&ak.transpose() * &hk) * &wa)).symmetrize();
        if !(a_next.is_finite() && g_next.is_finite() && h_next.is_finite()) || h_next.max_abs() > 1e150 {
            return Err(LqgError::NotStabilizable);
        }
        let step = (&h_next - &hk).norm_1();
        let scale = h_next.norm_1().max(f64::MIN_POSITIVE);
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if step <= SDA_TOL * scale || ak.max_abs() == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LqgError::NotStabilizable);
    }
    let res = dare_residual(a, b, q, r, &hk)?;
    if !(res <= DARE_RESIDUAL_TOL * hk.norm_fro().max(1.0)) {
        return Err(LqgError::NotStabilizable);
    }
    let k = gain_from_p(a, b, r, &hk)?;
    if spectral_radius(&(a - &(b * &k)))? >= 1.0 {
        return Err(LqgError::NotStabilizable);
    }
    Ok(hk)
}

/// Frobenius norm of the Riccati residual at `P`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64, LqgError> {
    let pa = p * a;
    let bt_pa = &b.transpose() * &pa;
    let s = r + &(&(&b.transpose() * p) * b);
    let x = Lu::new(&s)?.solve(&bt_pa);
    let res = &(&(&(&a.transpose() * &pa) - &(&bt_pa.transpose() * &x)) + q) - p;
    Ok(res.norm_fro())
}

fn gain_from_p(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix, LqgError> {
    let bt_p = &b.transpose() * p;
    let s = r + &(&bt_p * b);
    Ok(Lu::new(&s)?.solve(&(&bt_p * a)))
}

pub fn spectral_radius(a: &Matrix) -> Result<f64, LqgError> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = eigenvalues(a)?;
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `K = (R + B^T P B)^{-1} B^T P A` so that `u = -K x`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, LqgError> {
    let p = solve_dare(a, b, q, r)?;
    gain_from_p(a, b, r, &p)
}

/// Current-form Kalman gain `L = S C^T (C S C^T + R_v)^{-1}`, with `S` the
/// a priori error covariance; the update is `x_k = x_k^- + L (y_k - C x_k^-)`.
pub fn kalman_gain_current(a: &Matrix, c: &Matrix, q_w: &Matrix, r_v: &Matrix) -> Result<Matrix, LqgError> {
    let sigma = solve_dare(&a.transpose(), &c.transpose(), q_w, r_v).map_err(|e| match e {
        LqgError::NotStabilizable => LqgError::NotDetectable,
        other => other,
    })?;
    let sct = &sigma * &c.transpose();
    let inno = r_v + &(c * &sct);
    // L = S C^T M^{-1}  <=>  M^T L^T = (S C^T)^T.
    Ok(Lu::new(&inno.transpose())?.solve(&sct.transpose()).transpose())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqgWeights {
    /// State weight on the design plant.
    pub q_x: Matrix,
    pub r_u: Matrix,
    pub q_w: Matrix,
    pub r_v: Matrix,
    /// Weight on each integrator state; used only with integral action.
    pub integral_weight: Vec<f64>,
}

impl LqgWeights {
    /// State weight `C^T Q_y C` from an output weight, noise model
    /// `Q_w = w B B^T`, `R_v = v I`.
    pub fn from_output_weight(
        plant: &LtiSystem,
        q_y: &Matrix,
        r_u: Matrix,
        process_noise: f64,
        measurement_noise: f64,
        integral_weight: Vec<f64>,
    ) -> Self {
        let c = plant.c();
        let b = plant.b();
        LqgWeights {
            q_x: (&(&c.transpose() * q_y) * c).symmetrize(),
            r_u,
            q_w: (b * &b.transpose()).scale(process_noise).symmetrize(),
            r_v: Matrix::identity(plant.n_outputs()).scale(measurement_noise),
            integral_weight,
        }
    }

    pub fn validate(&self, n: usize, m: usize, p: usize) -> Result<(), LqgError> {
        if self.q_x.shape() != (n, n) || self.q_w.shape() != (n, n) {
            return Err(LqgError::DimensionMismatch("state weights"));
        }
        if self.r_u.shape() != (m, m) {
            return Err(LqgError::DimensionMismatch("input weight"));
        }
        if self.r_v.shape() != (p, p) {
            return Err(LqgError::DimensionMismatch("measurement noise"));
        }
        for (w, pd, what) in [
            (&self.q_x, false, "Q_x must be symmetric positive semidefinite"),
            (&self.q_w, false, "Q_w must be symmetric positive semidefinite"),
            (&self.r_u, true, "R_u must be symmetric positive definite"),
            (&self.r_v, true, "R_v must be symmetric positive definite"),
        ] {
            if !definite(w, pd)? {
                return Err(LqgError::InvalidWeights(what));
            }
        }
        if self.integral_weight.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LqgError::InvalidWeights("integral weights must be nonnegative"));
        }
        Ok(())
    }
}

fn definite(w: &Matrix, strict: bool) -> Result<bool, LqgError> {
    let scale = w.max_abs().max(f64::MIN_POSITIVE);
    if (w - &w.transpose()).max_abs() > 1e-12 * scale {
        return Ok(false);
    }
    if w.nrows() == 0 {
        return Ok(true);
    }
    let min = eigenvalues(w)?.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    Ok(if strict { min > 0.0 } else { min >= -1e-12 * scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerStructure {
    Lqg,
    LqgIntegral,
}

/// Discrete controller from measurements to commanded inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRealization {
    pub system: LtiSystem,
    pub structure: ControllerStructure,
    pub order: usize,
    pub k: Matrix,
    pub l: Matrix,
}

fn check_plant(plant: &LtiSystem) -> Result<f64, LqgError> {
    let ts = match plant.timebase() {
        Timebase::Discrete(ts) => ts,
        Timebase::Continuous => return Err(LqgError::NotDiscrete),
    };
    if !plant.is_strictly_proper() {
        return Err(LqgError::NotStrictlyProper);
    }
    Ok(ts)
}

fn controller_labels(plant: &LtiSystem) -> (Vec<SignalLabel>, Vec<SignalLabel>) {
    (plant.output_labels().to_vec(), plant.input_labels().to_vec())
}

/// LQG regulator: `u_k = -K x_k` with `x_k` the current estimate. The
/// controller state is the a priori estimate.
pub fn assemble_lqg(plant: &LtiSystem, w: &LqgWeights) -> Result<ControllerRealization, LqgError> {
    let ts = check_plant(plant)?;
    let (n, m, p) = (plant.order(), plant.n_inputs(), plant.n_outputs());
    w.validate(n, m, p)?;
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let k = lqr_gain(a, b, &w.q_x, &w.r_u)?;
    let l = kalman_gain_current(a, c, &w.q_w, &w.r_v)?;
    let i_lc = &Matrix::identity(n) - &(&l * c);
    let a_bk = a - &(b * &k);
    let (ins, outs) = controller_labels(plant);
    let system = LtiSystem::new(
        &a_bk * &i_lc,
        &a_bk * &l,
        -&(&k * &i_lc),
        -&(&k * &l),
        Timebase::Discrete(ts),
        ins,
        outs,
    )?;
    Ok(ControllerRealization { system, structure: ControllerStructure::Lqg, order: n, k, l })
}

/// LQG with summing integrators on the measured outputs listed in `tracked`.
/// The regulator is designed on the augmented plant; the estimator sees the
/// original plant only. Controller state: a priori estimate, then integrators.
pub fn assemble_lqg_integral(plant: &LtiSystem, w: &LqgWeights, tracked: &[usize]) -> Result<ControllerRealization, LqgError> {
    let ts = check_plant(plant)?;
    let (n, m, p) = (plant.order(), plant.n_inputs(), plant.n_outputs());
    w.validate(n, m, p)?;
    let nt = tracked.len();
    if nt == 0 || tracked.iter().any(|&t| t >= p) {
        return Err(LqgError::DimensionMismatch("tracked output indices"));
    }
    if w.integral_weight.len() != nt || w.integral_weight.iter().any(|&x| x <= 0.0) {
        return Err(LqgError::InvalidWeights("integral weight must be positive on every tracked output"));
    }
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let sel = Matrix::from_fn(nt, p, |i, j| if tracked[i] == j { 1.0 } else { 0.0 });
    let ct = &sel * c;

    let mut aa = Matrix::zeros(n + nt, n + nt);
    aa.set_block(0, 0, a);
    aa.set_block(n, 0, &ct);
    aa.set_block(n, n, &Matrix::identity(nt));
    let ba = b.vstack(&Matrix::zeros(nt, m));
    let qa = Matrix::block_diag(&[&w.q_x, &Matrix::diag(&w.integral_weight)]);
    let ka = lqr_gain(&aa, &ba, &qa, &w.r_u)?;
    let kx = ka.block(0, m, 0, n);
    let ki = ka.block(0, m, n, n + nt);
    let l = kalman_gain_current(a, c, &w.q_w, &w.r_v)?;

    let i_lc = &Matrix::identity(n) - &(&l * c);
    let a_bk = a - &(b * &kx);
    let mut ac = Matrix::zeros(n + nt, n + nt);
    ac.set_block(0, 0, &(&a_bk * &i_lc));
    ac.set_block(0, n, &-&(b * &ki));
    ac.set_block(n, n, &Matrix::identity(nt));
    let bc = (&a_bk * &l).vstack(&sel);
    let cc = (-&(&kx * &i_lc)).hstack(&-&ki);
    let dc = -&(&kx * &l);
    let (ins, outs) = controller_labels(plant);
    let system = LtiSystem::new(ac, bc, cc, dc, Timebase::Discrete(ts), ins, outs)?;
    Ok(ControllerRealization { system, structure: ControllerStructure::LqgIntegral, order: n + nt, k: ka, l })
}

/// State matrix of the loop formed by a strictly proper discrete plant and
/// a controller from its outputs to its inputs; state `(x, xi)`.
pub fn loop_matrix(plant: &LtiSystem, ctrl: &LtiSystem) -> Result<Matrix, LqgError> {
    if ctrl.n_inputs() != plant.n_outputs() || ctrl.n_outputs() != plant.n_inputs() {
        return Err(LqgError::DimensionMismatch("controller signal widths"));
    }
    if !plant.is_strictly_proper() {
        return Err(LqgError::NotStrictlyProper);
    }
    let (n, nc) = (plant.order(), ctrl.order());
    let mut m = Matrix::zeros(n + nc, n + nc);
    m.set_block(0, 0, &(plant.a() + &(&(plant.b() * ctrl.d()) * plant.c())));
    m.set_block(0, n, &(plant.b() * ctrl.c()));
    m.set_block(n, 0, &(ctrl.b() * plant.c()));
    m.set_block(n, n, ctrl.a());
    Ok(m)
}

pub fn closed_loop_spectral_radius(plant: &LtiSystem, ctrl: &LtiSystem) -> Result<f64, LqgError> {
    spectral_radius(&loop_matrix(plant, ctrl)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m1(x: f64) -> Matrix {
        Matrix::from_rows(&[&[x]])
    }

    #[test]
    fn scalar_cases() {
        let p = solve_dare(&m1(0.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
        let k = lqr_gain(&m1(0.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert!(k[(0, 0)].abs() < 1e-14);

        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let p = solve_dare(&m1(1.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert!((p[(0, 0)] - golden).abs() < 1e-10);
        let k = lqr_gain(&m1(1.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert!((k[(0, 0)] - golden / (1.0 + golden)).abs() < 1e-10);

        assert_eq!(solve_dare(&m1(1.0), &m1(0.0), &m1(1.0), &m1(1.0)), Err(LqgError::NotStabilizable));
    }

    #[test]
    fn perfect_measurement_limit() {
        let a = Matrix::from_rows(&[&[0.9, 0.2], &[0.0, 1.0]]);
        let l = kalman_gain_current(&a, &Matrix::identity(2), &Matrix::identity(2), &Matrix::identity(2).scale(1e-10)).unwrap();
        assert!((&l - &Matrix::identity(2)).max_abs() < 1e-8);
    }

    #[test]
    fn double_integrator_loop_is_stable() {
        let ts = 0.1;
        let plant = LtiSystem::new(
            Matrix::from_rows(&[&[1.0, ts], &[0.0, 1.0]]),
            Matrix::from_rows(&[&[0.5 * ts * ts], &[ts]]),
            Matrix::from_rows(&[&[1.0, 0.0]]),
            Matrix::zeros(1, 1),
            Timebase::Discrete(ts),
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::pressure("y")],
        )
        .unwrap();
        let w = LqgWeights::from_output_weight(&plant, &m1(1.0), m1(0.1), 1.0, 0.01, vec![1.0]);
        let c = assemble_lqg(&plant, &w).unwrap();
        assert_eq!(c.order, 2);
        assert!(closed_loop_spectral_radius(&plant, &c.system).unwrap() < 1.0);
        let ci = assemble_lqg_integral(&plant, &w, &[0]).unwrap();
        assert_eq!(ci.order, 3);
        assert!(closed_loop_spectral_radius(&plant, &ci.system).unwrap() < 1.0);
        let mut w0 = w.clone();
        w0.integral_weight = vec![0.0];
        assert!(matches!(assemble_lqg_integral(&plant, &w0, &[0]), Err(LqgError::InvalidWeights(_))));
    }

    #[test]
    fn rejects_feedthrough_and_continuous() {
        let s = LtiSystem::static_gain(m1(1.0), Timebase::Discrete(1.0), vec![SignalLabel::flow("u")], vec![SignalLabel::pressure("y")]).unwrap();
        let w = LqgWeights { q_x: Matrix::zeros(0, 0), r_u: m1(1.0), q_w: Matrix::zeros(0, 0), r_v: m1(1.0), integral_weight: vec![] };
        assert_eq!(assemble_lqg(&s, &w), Err(LqgError::NotStrictlyProper));
        let s = LtiSystem::static_gain(m1(0.0), Timebase::Continuous, vec![SignalLabel::flow("u")], vec![SignalLabel::pressure("y")]).unwrap();
        assert_eq!(assemble_lqg(&s, &w), Err(LqgError::NotDiscrete));
    }
}
