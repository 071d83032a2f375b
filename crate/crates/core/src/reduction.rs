//! Anti-aliasing filters and balanced truncation that leaves marginal and
//! unstable modes untouched.
//!
//! Butterworth filters are realized as cascaded second-order sections with
//! states `(y, y'/w)`; odd orders start with one first-order section.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{balance, lyapunov, real_schur, reorder_schur, svd, sylvester, LinalgError, Matrix};
use crate::lti::{eval_tf, series, LtiError, LtiSystem, SignalLabel, Timebase};

/// Real-part threshold separating stable modes from marginal ones.
pub const BOUNDARY_TOL: f64 = 1e-7;
pub const GRID_POINTS: usize = 200;
pub const GRID_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum ReductionError {
    InvalidParams(&'static str),
    /// An eigenvalue sits in the band between `tol` and `2 tol` from the axis.
    AmbiguousBoundary { eigenvalue: Complex64 },
    EigenFailure,
    UnstableInput,
    TargetTooSmall { target: usize, unstable: usize },
    NotContinuous,
    Lti(LtiError),
}

impl fmt::Display for ReductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductionError::InvalidParams(m) => write!(f, "invalid parameters: {m}"),
            ReductionError::AmbiguousBoundary { eigenvalue } => {
                write!(f, "eigenvalue {eigenvalue} is too close to the stability boundary to classify")
            }
            ReductionError::EigenFailure => write!(f, "invariant subspace computation failed"),
            ReductionError::UnstableInput => write!(f, "system has eigenvalues that are not strictly stable"),
            ReductionError::TargetTooSmall { target, unstable } => {
                write!(f, "target order {target} is below the unstable block order {unstable}")
            }
            ReductionError::NotContinuous => write!(f, "reduction requires a continuous-time system"),
            ReductionError::Lti(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ReductionError {}

impl From<LtiError> for ReductionError {
    fn from(e: LtiError) -> Self {
        ReductionError::Lti(e)
    }
}

impl From<LinalgError> for ReductionError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::NoConvergence | LinalgError::SwapRejected | LinalgError::CommonEigenvalue => {
                ReductionError::EigenFailure
            }
            other => ReductionError::Lti(LtiError::Linalg(other)),
        }
    }
}

/// Unity-DC-gain analog Butterworth low-pass filter of order `n` with cutoff `fc` Hz.
pub fn butterworth_lowpass(n: usize, fc: f64) -> Result<LtiSystem, ReductionError> {
    if n == 0 {
        return Err(ReductionError::InvalidParams("filter order must be at least 1"));
    }
    if !(fc > 0.0 && fc.is_finite()) {
        return Err(ReductionError::InvalidParams("cutoff must be positive"));
    }
    let w = 2.0 * PI * fc;
    let mut sections = Vec::new();
    if n % 2 == 1 {
        sections.push(section(
            Matrix::from_rows(&[&[-w]]),
            Matrix::from_rows(&[&[w]]),
            Matrix::from_rows(&[&[1.0]]),
        )?);
    }
    for k in 1..=n / 2 {
        let theta = PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
        let zeta = -theta.cos();
        sections.push(section(
            Matrix::from_rows(&[&[0.0, w], &[-w, -2.0 * zeta * w]]),
            Matrix::from_rows(&[&[0.0], &[w]]),
            Matrix::from_rows(&[&[1.0, 0.0]]),
        )?);
    }
    let mut out = sections[0].clone();
    for s in &sections[1..] {
        out = series(&out, s)?;
    }
    Ok(out)
}

fn section(a: Matrix, b: Matrix, c: Matrix) -> Result<LtiSystem, LtiError> {
    LtiSystem::new(
        a,
        b,
        c,
        Matrix::zeros(1, 1),
        Timebase::Continuous,
        vec![SignalLabel::pressure("filter_in")],
        vec![SignalLabel::pressure("filter_out")],
    )
}

/// Passes each output listed in `sensors` through its own copy of the SISO
/// `filter`; the remaining outputs are unchanged.
pub fn append_sensor_filters(plant: &LtiSystem, filter: &LtiSystem, sensors: &[usize]) -> Result<LtiSystem, ReductionError> {
    if filter.n_inputs() != 1 || filter.n_outputs() != 1 {
        return Err(LtiError::DimensionMismatch("sensor filter must be SISO").into());
    }
    let p = plant.n_outputs();
    let mut seen = vec![false; p];
    for &s in sensors {
        if s >= p || seen[s] {
            return Err(LtiError::DimensionMismatch("sensor index").into());
        }
        seen[s] = true;
    }
    if sensors.is_empty() {
        return Ok(plant.clone());
    }
    let nf = filter.order();
    let n = nf * sensors.len();
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, p);
    let mut c = Matrix::zeros(p, n);
    let mut d = Matrix::identity(p);
    for (k, &s) in sensors.iter().enumerate() {
        let o = k * nf;
        a.set_block(o, o, filter.a());
        b.set_block(o, s, filter.b());
        c.set_block(s, o, filter.c());
        d[(s, s)] = filter.d()[(0, 0)];
    }
    let labels = plant.output_labels().to_vec();
    let bank = LtiSystem::new(a, b, c, d, plant.timebase(), labels.clone(), labels)?;
    Ok(series(plant, &bank)?)
}

/// Block-diagonal split `G = G_s + G_u`. The feedthrough stays with the
/// stable part; `transform` maps new coordinates to old (`x = T z`).
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub stable: LtiSystem,
    pub unstable: LtiSystem,
    pub transform: Matrix,
    pub transform_inv: Matrix,
}

pub fn stable_unstable_decompose(sys: &LtiSystem, boundary_tol: f64) -> Result<Decomposition, ReductionError> {
    if !sys.timebase().is_continuous() {
        return Err(ReductionError::NotContinuous);
    }
    let n = sys.order();
    let (ab, scale) = balance(sys.a());
    let mut schur = real_schur(&ab)?;
    for ev in schur.eigenvalues() {
        let r = ev.re.abs();
        if r > boundary_tol && r < 2.0 * boundary_tol {
            return Err(ReductionError::AmbiguousBoundary { eigenvalue: ev });
        }
    }
    let ns = reorder_schur(&mut schur, |ev| ev.re < -boundary_tol)?;
    let t11 = schur.t.block(0, ns, 0, ns);
    let t12 = schur.t.block(0, ns, ns, n);
    let t22 = schur.t.block(ns, n, ns, n);
    let y = if ns == 0 || ns == n { Matrix::zeros(ns, n - ns) } else { sylvester(&t11, &-&t22, &-&t12)? };

    let mut upper = Matrix::identity(n);
    upper.set_block(0, ns, &y);
    let mut upper_inv = Matrix::identity(n);
    upper_inv.set_block(0, ns, &-&y);
    let dmat = Matrix::diag(&scale);
    let dinv = Matrix::diag(&scale.iter().map(|s| 1.0 / s).collect::<Vec<_>>());
    let transform = &(&dmat * &schur.u) * &upper;
    let transform_inv = &(&upper_inv * &schur.u.transpose()) * &dinv;

    let b = &transform_inv * sys.b();
    let c = sys.c() * &transform;
    let (m, p) = (sys.n_inputs(), sys.n_outputs());
    let ins = sys.input_labels().to_vec();
    let outs = sys.output_labels().to_vec();
    let stable = LtiSystem::new(
        t11,
        b.block(0, ns, 0, m),
        c.block(0, p, 0, ns),
        sys.d().clone(),
        Timebase::Continuous,
        ins.clone(),
        outs.clone(),
    )?;
    let unstable = LtiSystem::new(
        t22,
        b.block(ns, n, 0, m),
        c.block(0, p, ns, n),
        Matrix::zeros(p, m),
        Timebase::Continuous,
        ins,
        outs,
    )?;
    Ok(Decomposition { stable, unstable, transform, transform_inv })
}

/// Controllability and observability Gramians of a strictly stable system.
pub fn gramians(sys: &LtiSystem) -> Result<(Matrix, Matrix), ReductionError> {
    if !sys.timebase().is_continuous() {
        return Err(ReductionError::NotContinuous);
    }
    if sys.order() == 0 {
        return Ok((Matrix::zeros(0, 0), Matrix::zeros(0, 0)));
    }
    let ev = crate::linalg::eigenvalues(sys.a())?;
    if ev.iter().any(|z| z.re >= 0.0) {
        return Err(ReductionError::UnstableInput);
    }
    let bbt = sys.b() * &sys.b().transpose();
    let ctc = &sys.c().transpose() * sys.c();
    let p = lyapunov(sys.a(), &bbt)?;
    let q = lyapunov(&sys.a().transpose(), &ctc)?;
    Ok((p, q))
}

/// `A X + X A^T + W` in Frobenius norm.
pub fn lyapunov_residual(a: &Matrix, x: &Matrix, w: &Matrix) -> f64 {
    let r = &(&(a * x) + &(x * &a.transpose())) + w;
    r.norm_fro()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub hankel_singular_values: Vec<f64>,
    pub retained_order: usize,
    pub unstable_block_order: usize,
    pub error_bound: f64,
    pub achieved_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionOptions {
    pub boundary_tol: f64,
    /// Error grid in rad/s, log spaced.
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions { boundary_tol: BOUNDARY_TOL, grid_min: GRID_MIN, grid_max: PI, grid_points: GRID_POINTS }
    }
}

impl ReductionOptions {
    /// Grid up to the Nyquist frequency of sample time `ts`.
    pub fn for_sample_time(ts: f64) -> Self {
        ReductionOptions { grid_max: PI / ts, ..Self::default() }
    }

    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.grid_min, self.grid_max, self.grid_points)
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

pub fn balanced_truncate(sys: &LtiSystem, target: usize) -> Result<(LtiSystem, ReductionReport), ReductionError> {
    balanced_truncate_with(sys, target, &ReductionOptions::default())
}

/// Square-root balanced truncation of the stable part; the marginal and
/// unstable block is reattached unchanged. State order of the result:
/// retained balanced states, then the unstable block.
pub fn balanced_truncate_with(
    sys: &LtiSystem,
    target: usize,
    opts: &ReductionOptions,
) -> Result<(LtiSystem, ReductionReport), ReductionError> {
    let dec = stable_unstable_decompose(sys, opts.boundary_tol)?;
    let nu = dec.unstable.order();
    let ns = dec.stable.order();
    if target < nu {
        return Err(ReductionError::TargetTooSmall { target, unstable: nu });
    }
    if target > sys.order() {
        return Err(ReductionError::InvalidParams("target order exceeds system order"));
    }
    let k = target - nu;
    let (p, q) = gramians(&dec.stable)?;
    let lc = psd_factor(&p);
    let lo = psd_factor(&q);
    let cross = svd(&(&lo.transpose() * &lc));
    let hsv = cross.s.clone();

    let reduced_stable = if k == ns {
        dec.stable.clone()
    } else {
        if hsv[..k].iter().any(|&s| s <= 0.0) {
            return Err(ReductionError::InvalidParams("retained state has a zero Hankel singular value"));
        }
        let isq: Vec<f64> = hsv[..k].iter().map(|s| 1.0 / s.sqrt()).collect();
        let wk = cross.u.block(0, ns, 0, k);
        let vk = cross.v.block(0, ns, 0, k);
        let tl = &(&Matrix::diag(&isq) * &wk.transpose()) * &lo.transpose();
        let tr = &(&lc * &vk) * &Matrix::diag(&isq);
        LtiSystem::new(
            &(&tl * dec.stable.a()) * &tr,
            &tl * dec.stable.b(),
            dec.stable.c() * &tr,
            dec.stable.d().clone(),
            Timebase::Continuous,
            sys.input_labels().to_vec(),
            sys.output_labels().to_vec(),
        )?
    };

    let mut grid_err: f64 = 0.0;
    for w in opts.grid() {
        let s = Complex64::new(0.0, w);
        let diff = &eval_tf(&dec.stable, s)? - &eval_tf(&reduced_stable, s)?;
        grid_err = grid_err.max(sigma_max(&diff));
    }

    let reduced = join_blocks(&reduced_stable, &dec.unstable)?;
    let report = ReductionReport {
        error_bound: 2.0 * hsv[k..].iter().sum::<f64>(),
        hankel_singular_values: hsv,
        retained_order: target,
        unstable_block_order: nu,
        achieved_error: grid_err,
    };
    Ok((reduced, report))
}

fn join_blocks(stable: &LtiSystem, unstable: &LtiSystem) -> Result<LtiSystem, LtiError> {
    let a = Matrix::block_diag(&[stable.a(), unstable.a()]);
    let b = stable.b().vstack(unstable.b());
    let c = stable.c().hstack(unstable.c());
    LtiSystem::new(
        a,
        b,
        c,
        stable.d().clone(),
        stable.timebase(),
        stable.input_labels().to_vec(),
        stable.output_labels().to_vec(),
    )
}

/// `L` with `L L^T = M` for symmetric positive semidefinite `M`.
fn psd_factor(m: &Matrix) -> Matrix {
    let d = svd(&m.symmetrize());
    let roots: Vec<f64> = d.s.iter().map(|s| s.max(0.0).sqrt()).collect();
    &d.u * &Matrix::diag(&roots)
}

/// Largest singular value of a complex matrix via its real embedding.
pub fn sigma_max(m: &crate::linalg::CMatrix) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    let emb = Matrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    svd(&emb).s[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{dc_gain, poles};

    fn diag_system(a: &[f64], b: &[f64], c: &[f64]) -> LtiSystem {
        let n = a.len();
        LtiSystem::new(
            Matrix::diag(a),
            Matrix::diag(b),
            Matrix::diag(c),
            Matrix::zeros(n, n),
            Timebase::Continuous,
            (0..n).map(|i| SignalLabel::flow(alloc::format!("u{i}"))).collect(),
            (0..n).map(|i| SignalLabel::pressure(alloc::format!("y{i}"))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn butterworth_magnitudes() {
        for n in 1..=9 {
            let f = butterworth_lowpass(n, 0.4).unwrap();
            assert_eq!(f.order(), n);
            let h0 = eval_tf(&f, Complex64::new(0.0, 0.0)).unwrap()[(0, 0)];
            assert!((h0.norm() - 1.0).abs() < 1e-12);
            let hc = eval_tf(&f, Complex64::new(0.0, 2.0 * PI * 0.4)).unwrap()[(0, 0)];
            assert!((hc.norm() - 0.5f64.sqrt()).abs() < 1e-9, "n={n} |H|={}", hc.norm());
        }
    }

    #[test]
    fn butterworth_rejects_bad_input() {
        assert!(butterworth_lowpass(0, 1.0).is_err());
        assert!(butterworth_lowpass(2, -1.0).is_err());
    }

    #[test]
    fn diag_split() {
        let s = diag_system(&[-1.0, 0.0], &[1.0, 1.0], &[1.0, 1.0]);
        let d = stable_unstable_decompose(&s, BOUNDARY_TOL).unwrap();
        assert_eq!((d.stable.order(), d.unstable.order()), (1, 1));
        assert!((d.stable.a()[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn ambiguous_band() {
        let s = diag_system(&[-1.5e-7, -1.0], &[1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(stable_unstable_decompose(&s, BOUNDARY_TOL), Err(ReductionError::AmbiguousBoundary { .. })));
    }

    #[test]
    fn scalar_gramians() {
        let s = diag_system(&[-1.0], &[1.0], &[2.0]);
        let (p, q) = gramians(&s).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((q[(0, 0)] - 2.0).abs() < 1e-15);
        assert!(gramians(&diag_system(&[0.5], &[1.0], &[1.0])).is_err());
    }

    #[test]
    fn balanced_diag_bound_is_tight() {
        let hsv = [3.0, 1.0, 0.01];
        let g: Vec<f64> = hsv.iter().map(|s: &f64| (2.0 * s).sqrt()).collect();
        let s = diag_system(&[-1.0; 3], &g, &g);
        let (r, rep) = balanced_truncate(&s, 2).unwrap();
        assert_eq!(r.order(), 2);
        for (a, b) in rep.hankel_singular_values.iter().zip(hsv) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((rep.error_bound - 0.02).abs() < 1e-12);
        assert!(rep.achieved_error <= rep.error_bound * (1.0 + 1e-6));
        assert!(rep.achieved_error > 0.0199);
    }

    #[test]
    fn full_order_is_exact_and_integrator_kept() {
        let a = Matrix::from_rows(&[&[-1.0, 2.0, 0.0], &[0.0, -3.0, 1.0], &[0.0, 0.0, 0.0]]);
        let s = LtiSystem::new(
            a,
            Matrix::from_rows(&[&[1.0], &[0.5], &[1.0]]),
            Matrix::from_rows(&[&[1.0, 1.0, 1.0]]),
            Matrix::zeros(1, 1),
            Timebase::Continuous,
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::pressure("y")],
        )
        .unwrap();
        let (r, rep) = balanced_truncate(&s, 3).unwrap();
        assert!(rep.achieved_error < 1e-10);
        assert_eq!(rep.unstable_block_order, 1);
        let zeros = poles(&r).unwrap().iter().filter(|z| z.norm() < 1e-8).count();
        assert_eq!(zeros, 1);
        assert!(matches!(balanced_truncate(&s, 0), Err(ReductionError::TargetTooSmall { target: 0, unstable: 1 })));
        let (r1, _) = balanced_truncate(&s, 1).unwrap();
        assert_eq!(r1.order(), 1);
        assert!(r1.is_strictly_proper());
    }

    #[test]
    fn filters_keep_dc_gain() {
        let s = diag_system(&[-1.0, -2.0], &[1.0, 3.0], &[2.0, 1.0]);
        let f = butterworth_lowpass(4, 0.4).unwrap();
        let fs = append_sensor_filters(&s, &f, &[1]).unwrap();
        assert_eq!(fs.order(), 6);
        let (g0, g1) = (dc_gain(&s).finite().unwrap(), dc_gain(&fs).finite().unwrap());
        assert!((&g0 - &g1).max_abs() < 1e-12);
        assert_eq!(append_sensor_filters(&s, &f, &[]).unwrap(), s);
        assert!(append_sensor_filters(&s, &f, &[2]).is_err());
    }
}
