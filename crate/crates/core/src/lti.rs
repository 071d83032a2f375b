//! Linear time-invariant state-space systems with typed signal labels.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, expm, CMatrix, LinalgError, Lu, Matrix};

/// Eigenvalues within this distance of the origin (or of 1 in discrete time)
/// are classed as integrators.
pub const TOL_ZERO: f64 = 1e-9;

/// Frequencies of the DC limit sweep, largest first.
pub const DC_SWEEP: [f64; 3] = [1e-4, 1e-5, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Timebase {
    Continuous,
    /// Sampled with period `T_s` seconds.
    Discrete(f64),
}

impl Timebase {
    pub fn is_continuous(&self) -> bool {
        matches!(self, Timebase::Continuous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignalKind {
    Pressure,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    External,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Units {
    Pa,
    KgPerS,
}

impl SignalKind {
    pub fn units(self) -> Units {
        match self {
            SignalKind::Pressure => Units::Pa,
            SignalKind::Flow => Units::KgPerS,
        }
    }
}

/// Name and physical type of a deviation signal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignalLabel {
    pub name: String,
    pub kind: SignalKind,
    pub scope: Scope,
    pub units: Units,
}

impl SignalLabel {
    pub fn new(name: impl Into<String>, kind: SignalKind, scope: Scope) -> Self {
        SignalLabel { name: name.into(), kind, scope, units: kind.units() }
    }

    pub fn pressure(name: impl Into<String>) -> Self {
        Self::new(name, SignalKind::Pressure, Scope::Internal)
    }

    pub fn flow(name: impl Into<String>) -> Self {
        Self::new(name, SignalKind::Flow, Scope::Internal)
    }

    pub fn external(mut self) -> Self {
        self.scope = Scope::External;
        self
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        SignalLabel { name: name.into(), ..self.clone() }
    }

    fn is_consistent(&self) -> bool {
        self.units == self.kind.units()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LtiError {
    DimensionMismatch(&'static str),
    NonFiniteEntry,
    InconsistentUnits(String),
    InvalidSampleTime,
    /// `s` coincides with a pole.
    SingularAtS,
    MixedTimebase,
    EmptyAggregate,
    EigenFailure,
    NotContinuous,
    Linalg(LinalgError),
}

impl fmt::Display for LtiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LtiError::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            LtiError::NonFiniteEntry => write!(f, "matrix contains NaN or infinite entries"),
            LtiError::InconsistentUnits(name) => {
                write!(f, "signal `{name}` has units inconsistent with its kind")
            }
            LtiError::InvalidSampleTime => write!(f, "sample time must be positive and finite"),
            LtiError::SingularAtS => write!(f, "evaluation point is a pole of the system"),
            LtiError::MixedTimebase => write!(f, "systems do not share a timebase"),
            LtiError::EmptyAggregate => write!(f, "cannot aggregate an empty list of systems"),
            LtiError::EigenFailure => write!(f, "eigenvalue computation failed"),
            LtiError::NotContinuous => write!(f, "operation requires a continuous-time system"),
            LtiError::Linalg(e) => write!(f, "linear algebra failure: {e}"),
        }
    }
}

impl core::error::Error for LtiError {}

impl From<LinalgError> for LtiError {
    fn from(e: LinalgError) -> Self {
        LtiError::Linalg(e)
    }
}

/// `x' = A x + B u`, `y = C x + D u` (or the sampled analog).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
    timebase: Timebase,
    input_labels: Vec<SignalLabel>,
    output_labels: Vec<SignalLabel>,
}

/// Validating constructor.
pub fn make_system(
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
    timebase: Timebase,
    input_labels: Vec<SignalLabel>,
    output_labels: Vec<SignalLabel>,
) -> Result<LtiSystem, LtiError> {
    LtiSystem::new(a, b, c, d, timebase, input_labels, output_labels)
}

impl LtiSystem {
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        d: Matrix,
        timebase: Timebase,
        input_labels: Vec<SignalLabel>,
        output_labels: Vec<SignalLabel>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::DimensionMismatch("A must be square"));
        }
        if b.nrows() != n {
            return Err(LtiError::DimensionMismatch("rows(B) != rows(A)"));
        }
        if c.ncols() != n {
            return Err(LtiError::DimensionMismatch("cols(C) != rows(A)"));
        }
        if d.nrows() != c.nrows() {
            return Err(LtiError::DimensionMismatch("rows(D) != rows(C)"));
        }
        if d.ncols() != b.ncols() {
            return Err(LtiError::DimensionMismatch("cols(D) != cols(B)"));
        }
        if input_labels.len() != b.ncols() {
            return Err(LtiError::DimensionMismatch("input label count"));
        }
        if output_labels.len() != c.nrows() {
            return Err(LtiError::DimensionMismatch("output label count"));
        }
        if let Timebase::Discrete(ts) = timebase {
            if !(ts > 0.0 && ts.is_finite()) {
                return Err(LtiError::InvalidSampleTime);
            }
        }
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
            return Err(LtiError::NonFiniteEntry);
        }
        for l in input_labels.iter().chain(output_labels.iter()) {
            if !l.is_consistent() {
                return Err(LtiError::InconsistentUnits(l.name.clone()));
            }
        }
        Ok(LtiSystem { a, b, c, d, timebase, input_labels, output_labels })
    }

    /// Static gain `y = D u`.
    pub fn static_gain(
        d: Matrix,
        timebase: Timebase,
        input_labels: Vec<SignalLabel>,
        output_labels: Vec<SignalLabel>,
    ) -> Result<Self, LtiError> {
        let (p, m) = d.shape();
        Self::new(
            Matrix::zeros(0, 0),
            Matrix::zeros(0, m),
            Matrix::zeros(p, 0),
            d,
            timebase,
            input_labels,
            output_labels,
        )
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn d(&self) -> &Matrix {
        &self.d
    }
    pub fn timebase(&self) -> Timebase {
        self.timebase
    }
    pub fn input_labels(&self) -> &[SignalLabel] {
        &self.input_labels
    }
    pub fn output_labels(&self) -> &[SignalLabel] {
        &self.output_labels
    }
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.max_abs() == 0.0
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.input_labels.iter().position(|l| l.name == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.output_labels.iter().position(|l| l.name == name)
    }

    pub fn with_labels(
        mut self,
        input_labels: Vec<SignalLabel>,
        output_labels: Vec<SignalLabel>,
    ) -> Result<Self, LtiError> {
        if input_labels.len() != self.n_inputs() || output_labels.len() != self.n_outputs() {
            return Err(LtiError::DimensionMismatch("label count"));
        }
        self.input_labels = input_labels;
        self.output_labels = output_labels;
        Ok(self)
    }

    /// Realization in the coordinates `x = T z`.
    pub fn similarity(&self, t: &Matrix) -> Result<Self, LtiError> {
        let lu = Lu::new(t)?;
        let a = lu.solve(&(&self.a * t));
        let b = lu.solve(&self.b);
        let c = &self.c * t;
        LtiSystem::new(
            a,
            b,
            c,
            self.d.clone(),
            self.timebase,
            self.input_labels.clone(),
            self.output_labels.clone(),
        )
    }

    pub fn select_outputs(&self, rows: &[usize]) -> Result<Self, LtiError> {
        if rows.iter().any(|&r| r >= self.n_outputs()) {
            return Err(LtiError::DimensionMismatch("output index out of range"));
        }
        LtiSystem::new(
            self.a.clone(),
            self.b.clone(),
            self.c.select_rows(rows),
            self.d.select_rows(rows),
            self.timebase,
            self.input_labels.clone(),
            rows.iter().map(|&r| self.output_labels[r].clone()).collect(),
        )
    }

    pub fn select_inputs(&self, cols: &[usize]) -> Result<Self, LtiError> {
        if cols.iter().any(|&c| c >= self.n_inputs()) {
            return Err(LtiError::DimensionMismatch("input index out of range"));
        }
        LtiSystem::new(
            self.a.clone(),
            self.b.select_cols(cols),
            self.c.clone(),
            self.d.select_cols(cols),
            self.timebase,
            cols.iter().map(|&c| self.input_labels[c].clone()).collect(),
            self.output_labels.clone(),
        )
    }

    /// Transfer matrix at `s` (or `z` for sampled systems).
    pub fn eval_tf(&self, s: Complex64) -> Result<CMatrix, LtiError> {
        eval_tf(self, s)
    }
}

/// `C (sI - A)^{-1} B + D` by one complex LU factorization.
pub fn eval_tf(sys: &LtiSystem, s: Complex64) -> Result<CMatrix, LtiError> {
    let n = sys.order();
    let d = sys.d.to_complex();
    if n == 0 {
        return Ok(d);
    }
    let mut m = sys.a.to_complex().scale(Complex64::new(-1.0, 0.0));
    for i in 0..n {
        m[(i, i)] += s;
    }
    let lu = Lu::new(&m).map_err(|_| LtiError::SingularAtS)?;
    let bc = sys.b.to_complex();
    let x = lu.solve(&bc);
    let resid = (&(&m * &x) - &bc).max_abs();
    let scale = m.max_abs() * x.max_abs() + bc.max_abs();
    if !x.is_finite() || resid > 1e-10 * scale {
        return Err(LtiError::SingularAtS);
    }
    Ok(&(&sys.c.to_complex() * &x) + &d)
}

/// Steady-state gain of one input/output pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DcEntry {
    Finite(f64),
    /// The limit diverges: an integrator acts on this path.
    PoleAtZero,
}

impl DcEntry {
    pub fn value(self) -> Option<f64> {
        match self {
            DcEntry::Finite(v) => Some(v),
            DcEntry::PoleAtZero => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcGain {
    rows: usize,
    cols: usize,
    entries: Vec<DcEntry>,
}

impl DcGain {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> DcEntry {
        self.entries[i * self.cols + j]
    }

    /// The full matrix when every entry is finite.
    pub fn finite(&self) -> Option<Matrix> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).value()?;
            }
        }
        Some(m)
    }

    pub fn has_pole_at_zero(&self) -> bool {
        self.entries.iter().any(|e| matches!(e, DcEntry::PoleAtZero))
    }
}

fn dc_point(tb: Timebase, eps: f64) -> Complex64 {
    match tb {
        Timebase::Continuous => Complex64::new(eps, 0.0),
        Timebase::Discrete(_) => Complex64::new(1.0 + eps, 0.0),
    }
}

/// Steady-state gain. Without an integrator this is `-C A^{-1} B + D`
/// (`C (I - A)^{-1} B + D` in discrete time); otherwise each entry is
/// classified from its values along [`DC_SWEEP`].
pub fn dc_gain(sys: &LtiSystem) -> DcGain {
    let (p, m) = (sys.n_outputs(), sys.n_inputs());
    let has_integrator = match poles(sys) {
        Ok(ps) => ps.iter().any(|&l| near_dc(sys.timebase, l)),
        Err(_) => true,
    };
    if !has_integrator {
        if let Ok(g) = eval_tf(sys, dc_point(sys.timebase, 0.0)) {
            let g = g.re();
            return DcGain { rows: p, cols: m, entries: g.as_slice().iter().map(|&v| DcEntry::Finite(v)).collect() };
        }
    }
    let samples: Vec<Option<Matrix>> =
        DC_SWEEP.iter().map(|&e| eval_tf(sys, dc_point(sys.timebase, e)).ok().map(|g| g.re())).collect();
    let mut entries = Vec::with_capacity(p * m);
    for i in 0..p {
        for j in 0..m {
            let t: Option<Vec<f64>> = samples.iter().map(|s| s.as_ref().map(|g| g[(i, j)])).collect();
            entries.push(match t {
                Some(t) => classify_limit(t[0], t[1], t[2]),
                None => DcEntry::PoleAtZero,
            });
        }
    }
    DcGain { rows: p, cols: m, entries }
}

fn near_dc(tb: Timebase, l: Complex64) -> bool {
    match tb {
        Timebase::Continuous => l.norm() <= TOL_ZERO,
        Timebase::Discrete(_) => (l - Complex64::new(1.0, 0.0)).norm() <= TOL_ZERO,
    }
}

/// Cauchy test on three samples a decade apart, with a contraction test for
/// entries whose limit is approached linearly in `eps`. A convergent
/// sequence is Richardson-extrapolated to `eps = 0`.
pub(crate) fn classify_limit(t1: f64, t2: f64, t3: f64) -> DcEntry {
    let d1 = t2 - t1;
    let d2 = t3 - t2;
    let converged = d2.abs() <= 1e-6 * t3.abs().max(1.0) || d2.abs() <= 0.2 * d1.abs();
    if converged && t3.is_finite() {
        DcEntry::Finite(t3 + d2 / 9.0)
    } else {
        DcEntry::PoleAtZero
    }
}

/// Eigenvalues of `A`, sorted by real part descending then imaginary part
/// ascending, each certified by an inverse-iteration residual.
pub fn poles(sys: &LtiSystem) -> Result<Vec<Complex64>, LtiError> {
    let a = &sys.a;
    let mut ev = linalg::eigenvalues(a).map_err(|_| LtiError::EigenFailure)?;
    let anorm = a.norm_1().max(f64::MIN_POSITIVE);
    for &l in &ev {
        if eigen_residual(a, l) > 1e-8 * anorm.max(1.0) {
            return Err(LtiError::EigenFailure);
        }
    }
    ev.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(core::cmp::Ordering::Equal))
    });
    Ok(ev)
}

/// `||A v - lambda v||` for a unit vector `v` from two steps of shifted inverse iteration.
fn eigen_residual(a: &Matrix, l: Complex64) -> f64 {
    let n = a.nrows();
    let ac = a.to_complex();
    let delta = 1e-10 * a.norm_1().max(1.0);
    let mut m = ac.clone();
    for i in 0..n {
        m[(i, i)] -= l + Complex64::new(delta, delta);
    }
    let lu = match Lu::new(&m) {
        Ok(lu) => lu,
        // the shifted matrix is exactly singular: the shift is itself an eigenvalue
        Err(_) => return 0.0,
    };
    let mut v: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.3)).collect();
    for _ in 0..3 {
        v = lu.solve_vec(&v);
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return 0.0;
        }
        for z in v.iter_mut() {
            *z /= nrm;
        }
    }
    let av = ac.mul_vec(&v);
    av.iter().zip(&v).map(|(x, y)| (*x - l * *y).norm_sqr()).sum::<f64>().sqrt()
}

/// Block-diagonal aggregate; inputs and outputs concatenated in order.
pub fn direct_sum(systems: &[&LtiSystem]) -> Result<LtiSystem, LtiError> {
    let first = systems.first().ok_or(LtiError::EmptyAggregate)?;
    if systems.iter().any(|s| s.timebase != first.timebase) {
        return Err(LtiError::MixedTimebase);
    }
    let a: Vec<&Matrix> = systems.iter().map(|s| &s.a).collect();
    let b: Vec<&Matrix> = systems.iter().map(|s| &s.b).collect();
    let c: Vec<&Matrix> = systems.iter().map(|s| &s.c).collect();
    let d: Vec<&Matrix> = systems.iter().map(|s| &s.d).collect();
    LtiSystem::new(
        Matrix::block_diag(&a),
        Matrix::block_diag(&b),
        Matrix::block_diag(&c),
        Matrix::block_diag(&d),
        first.timebase,
        systems.iter().flat_map(|s| s.input_labels.iter().cloned()).collect(),
        systems.iter().flat_map(|s| s.output_labels.iter().cloned()).collect(),
    )
}

/// Cascade `second(first(u))`; inputs of `first`, outputs of `second`.
pub fn series(first: &LtiSystem, second: &LtiSystem) -> Result<LtiSystem, LtiError> {
    if first.timebase != second.timebase {
        return Err(LtiError::MixedTimebase);
    }
    if first.n_outputs() != second.n_inputs() {
        return Err(LtiError::DimensionMismatch("series signal width"));
    }
    let (n1, n2) = (first.order(), second.order());
    let mut a = Matrix::zeros(n1 + n2, n1 + n2);
    a.set_block(0, 0, &first.a);
    a.set_block(n1, 0, &(&second.b * &first.c));
    a.set_block(n1, n1, &second.a);
    let b = first.b.vstack(&(&second.b * &first.d));
    let c = (&second.d * &first.c).hstack(&second.c);
    let d = &second.d * &first.d;
    LtiSystem::new(
        a,
        b,
        c,
        d,
        first.timebase,
        first.input_labels.clone(),
        second.output_labels.clone(),
    )
}

/// Exact zero-order-hold discretization from the exponential of `[[A, B], [0, 0]] T_s`.
pub fn discretize_zoh(sys: &LtiSystem, ts: f64) -> Result<LtiSystem, LtiError> {
    if !sys.timebase.is_continuous() {
        return Err(LtiError::NotContinuous);
    }
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(LtiError::InvalidSampleTime);
    }
    let (ad, bd) = zoh_matrices(&sys.a, &sys.b, ts)?;
    LtiSystem::new(
        ad,
        bd,
        sys.c.clone(),
        sys.d.clone(),
        Timebase::Discrete(ts),
        sys.input_labels.clone(),
        sys.output_labels.clone(),
    )
}

pub(crate) fn zoh_matrices(a: &Matrix, b: &Matrix, ts: f64) -> Result<(Matrix, Matrix), LtiError> {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.set_block(0, 0, &a.scale(ts));
    aug.set_block(0, n, &b.scale(ts));
    let e = expm(&aug)?;
    Ok((e.block(0, n, 0, n), e.block(0, n, n, n + m)))
}

/// Sampled response; row `k` of `outputs` is `y_k = C x_k + D u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub outputs: Matrix,
    pub states: Matrix,
}

impl SimTrace {
    pub fn final_output(&self) -> Vec<f64> {
        let k = self.outputs.nrows();
        if k == 0 {
            return Vec::new();
        }
        self.outputs.row(k - 1).to_vec()
    }
}

/// Simulates from rest; row `k` of `inputs` is held over `[k dt, (k+1) dt)`.
pub fn simulate(sys: &LtiSystem, inputs: &Matrix, dt: f64) -> Result<SimTrace, LtiError> {
    simulate_from(sys, &alloc::vec![0.0; sys.order()], inputs, dt)
}

pub fn simulate_from(
    sys: &LtiSystem,
    x0: &[f64],
    inputs: &Matrix,
    dt: f64,
) -> Result<SimTrace, LtiError> {
    if inputs.ncols() != sys.n_inputs() {
        return Err(LtiError::DimensionMismatch("input signal width"));
    }
    if x0.len() != sys.order() {
        return Err(LtiError::DimensionMismatch("initial state length"));
    }
    let (ad, bd) = match sys.timebase {
        Timebase::Continuous => zoh_matrices(&sys.a, &sys.b, dt)?,
        Timebase::Discrete(_) => (sys.a.clone(), sys.b.clone()),
    };
    let steps = inputs.nrows();
    let n = sys.order();
    let mut outputs = Matrix::zeros(steps, sys.n_outputs());
    let mut states = Matrix::zeros(steps, n);
    let mut x = x0.to_vec();
    for k in 0..steps {
        let u = inputs.row(k);
        let y = add(&sys.c.mul_vec(&x), &sys.d.mul_vec(u));
        for (j, v) in y.iter().enumerate() {
            outputs[(k, j)] = *v;
        }
        for (j, v) in x.iter().enumerate() {
            states[(k, j)] = *v;
        }
        x = add(&ad.mul_vec(&x), &bd.mul_vec(u));
    }
    Ok(SimTrace { outputs, states })
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn integrator() -> LtiSystem {
        make_system(
            Matrix::from_rows(&[&[0.0]]),
            Matrix::from_rows(&[&[1.0]]),
            Matrix::from_rows(&[&[1.0]]),
            Matrix::from_rows(&[&[0.0]]),
            Timebase::Continuous,
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::pressure("y")],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        let err = make_system(
            Matrix::zeros(2, 2),
            Matrix::zeros(3, 1),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
            Timebase::Continuous,
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::flow("y")],
        );
        assert!(matches!(err, Err(LtiError::DimensionMismatch(_))));
        let err = make_system(
            Matrix::from_rows(&[&[f64::NAN]]),
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 1),
            Timebase::Continuous,
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::flow("y")],
        );
        assert_eq!(err, Err(LtiError::NonFiniteEntry));
    }

    #[test]
    fn integrator_tf_and_dc() {
        let g = integrator();
        let t = g.eval_tf(Complex64::new(1.0, 0.0)).unwrap();
        assert!((t[(0, 0)].re - 1.0).abs() < 1e-15);
        assert_eq!(g.eval_tf(Complex64::new(0.0, 0.0)), Err(LtiError::SingularAtS));
        assert_eq!(dc_gain(&g).get(0, 0), DcEntry::PoleAtZero);
    }

    #[test]
    fn zoh_scalar_closed_forms() {
        let g = integrator();
        let d = discretize_zoh(&g, 1.0).unwrap();
        assert!((d.a()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((d.b()[(0, 0)] - 1.0).abs() < 1e-15);
        let lag = make_system(
            Matrix::from_rows(&[&[-1.0]]),
            Matrix::from_rows(&[&[1.0]]),
            Matrix::from_rows(&[&[1.0]]),
            Matrix::from_rows(&[&[0.0]]),
            Timebase::Continuous,
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::flow("y")],
        )
        .unwrap();
        let d = discretize_zoh(&lag, 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert!((d.a()[(0, 0)] - e).abs() < 1e-15);
        assert!((d.b()[(0, 0)] - (1.0 - e)).abs() < 1e-15);
    }

    #[test]
    fn integrator_step_ramp() {
        let g = integrator();
        let u = Matrix::from_fn(101, 1, |_, _| 1.0);
        let tr = simulate(&g, &u, 0.01).unwrap();
        assert!((tr.final_output()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn limit_classification() {
        // 2 + eps converges, 1/eps diverges
        let v = classify_limit(2.0 + 1e-4, 2.0 + 1e-5, 2.0 + 1e-6).value().unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert_eq!(classify_limit(1e4, 1e5, 1e6), DcEntry::PoleAtZero);
    }

    #[test]
    fn diagonal_poles_sorted() {
        let g = make_system(
            Matrix::diag(&[-2.0, -1.0]),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
            Timebase::Continuous,
            vec![SignalLabel::flow("u")],
            vec![SignalLabel::flow("y")],
        )
        .unwrap();
        let p = poles(&g).unwrap();
        assert_eq!(p, vec![Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)]);
    }
}
