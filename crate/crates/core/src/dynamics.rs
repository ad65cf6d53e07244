//! Time evolution of pure states (Schrödinger) and density matrices
//! (Lindblad) under time-dependent Hamiltonians.
//!
//! Density matrices are evolved in column-stacked form through the same
//! generic ODE driver as kets: one integrator, two generators. The
//! Hamiltonian is sampled per integrator stage, never frozen piecewise, and
//! the integration is split at schedule breakpoints so parameter steps stay
//! exact.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::fockspace::{
    annihilation_op, BasisIndex, CsrMatrix, FockError, SparseOperator,
};
use crate::model::{BathSpec, LatticeSpec, ModelError, PiecewiseLinear};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state dimension {state} does not match operator dimension {op}")]
    DimensionMismatch { state: usize, op: usize },
    #[error("sample time {0} outside the integration span [{1}, {2}]")]
    SampleOutsideSpan(f64, f64, f64),
    #[error("sample times must be nondecreasing")]
    UnorderedSamples,
    #[error("step size underflow at t = {t} (err = {err:.3e}); tolerances unreachable")]
    StepUnderflow { t: f64, err: f64 },
    #[error("integrator tolerances must be positive")]
    BadTolerance,
    #[error("mode `{0}` is not a 2-level mode")]
    NotTwoLevel(String),
    #[error("empty integration span")]
    EmptySpan,
}

/// Scalar time dependence of one Hamiltonian term.
#[derive(Clone, Debug)]
pub enum Coeff {
    Const(f64),
    Piecewise(PiecewiseLinear),
    /// `value` inside `[t_on, t_off)`, zero outside.
    Window { t_on: f64, t_off: f64, value: f64 },
}

impl Coeff {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coeff::Const(v) => *v,
            Coeff::Piecewise(p) => p.eval(t),
            Coeff::Window { t_on, t_off, value } => {
                if t >= *t_on && t < *t_off {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Coeff::Const(_) => {}
            Coeff::Piecewise(p) => out.extend(p.breakpoints()),
            Coeff::Window { t_on, t_off, .. } => {
                out.push(*t_on);
                out.push(*t_off);
            }
        }
    }
}

/// Hamiltonian as a linear combination of sparse operators with scalar
/// time-dependent coefficients: `H(t) = Σ_m c_m(t) A_m`.
#[derive(Clone, Debug)]
pub struct TimeDepOperator {
    dim: usize,
    terms: Vec<(Coeff, SparseOperator)>,
}

impl TimeDepOperator {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn constant(op: SparseOperator) -> Self {
        let dim = op.dim();
        Self { dim, terms: vec![(Coeff::Const(1.0), op)] }
    }

    pub fn push(&mut self, coeff: Coeff, op: SparseOperator) {
        debug_assert_eq!(op.dim(), self.dim);
        self.terms.push((coeff, op));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Coeff, SparseOperator)] {
        &self.terms
    }

    /// Assemble the full sparse operator at one time.
    pub fn at(&self, t: f64) -> SparseOperator {
        let mut h = SparseOperator::zero(self.dim);
        for (coeff, op) in &self.terms {
            let c = coeff.eval(t);
            if c != 0.0 {
                h = h.add(&op.scaled(Complex64::new(c, 0.0))).expect("same dim");
            }
        }
        h
    }

    /// Breakpoints of all coefficients strictly inside `(t0, t1)`, sorted
    /// and deduplicated.
    pub fn breakpoints_within(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        for (coeff, _) in &self.terms {
            coeff.push_breakpoints(&mut pts);
        }
        pts.retain(|&t| t > t0 + 1e-12 && t < t1 - 1e-12);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts
    }

    /// Upper bound on the spectral radius over the span, from Gershgorin
    /// row sums sampled at span ends, breakpoints, and interval midpoints.
    pub fn spectral_radius_bound(&self, t0: f64, t1: f64) -> f64 {
        let mut pts = self.breakpoints_within(t0, t1);
        pts.push(t0);
        pts.push(t1);
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        pts.extend(mids);
        pts.iter().map(|&t| self.at(t).gershgorin_bound()).fold(0.0, f64::max)
    }
}

/// Pure state or density matrix over a shared basis.
#[derive(Clone, Debug)]
pub struct QuantumState {
    pub basis: Arc<BasisIndex>,
    pub data: StateData,
}

#[derive(Clone, Debug)]
pub enum StateData {
    Ket(DVector<Complex64>),
    Density(DMatrix<Complex64>),
}

impl QuantumState {
    pub fn ket(basis: Arc<BasisIndex>, v: DVector<Complex64>) -> Self {
        debug_assert_eq!(v.len(), basis.total_dim());
        Self { basis, data: StateData::Ket(v) }
    }

    pub fn density(basis: Arc<BasisIndex>, m: DMatrix<Complex64>) -> Self {
        debug_assert_eq!(m.nrows(), basis.total_dim());
        Self { basis, data: StateData::Density(m) }
    }

    /// Basis state with the given occupation tuple.
    pub fn fock(basis: Arc<BasisIndex>, occ: &[usize]) -> Self {
        let mut v = DVector::zeros(basis.total_dim());
        v[basis.index_of(occ)] = Complex64::ONE;
        Self::ket(basis, v)
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            StateData::Ket(v) => v.len(),
            StateData::Density(m) => m.nrows(),
        }
    }

    pub fn is_density(&self) -> bool {
        matches!(self.data, StateData::Density(_))
    }

    /// Ket norm or density trace.
    pub fn norm(&self) -> f64 {
        match &self.data {
            StateData::Ket(v) => v.norm(),
            StateData::Density(m) => m.diagonal().iter().map(|d| d.re).sum(),
        }
    }

    /// Promote to a density matrix (projector for kets).
    pub fn to_density(&self) -> Self {
        match &self.data {
            StateData::Ket(v) => {
                let m = v * v.adjoint();
                Self::density(self.basis.clone(), m)
            }
            StateData::Density(_) => self.clone(),
        }
    }

    /// `⟨A⟩` for a sparse operator.
    pub fn expectation(&self, op: &SparseOperator) -> Complex64 {
        match &self.data {
            StateData::Ket(v) => op.expectation_ket(v),
            StateData::Density(m) => op.trace_product(m),
        }
    }

    /// Population of one basis state.
    pub fn population(&self, occ: &[usize]) -> f64 {
        let i = self.basis.index_of(occ);
        match &self.data {
            StateData::Ket(v) => v[i].norm_sqr(),
            StateData::Density(m) => m[(i, i)].re,
        }
    }

    /// Reduced density matrix over the listed mode positions (ascending
    /// declaration order), tracing out everything else.
    pub fn partial_trace(&self, keep: &[usize]) -> DMatrix<Complex64> {
        let basis = &self.basis;
        let n_modes = basis.n_modes();
        let traced: Vec<usize> = (0..n_modes).filter(|p| !keep.contains(p)).collect();
        let keep_dim: usize = keep.iter().map(|&p| basis.mode(p).dim).product();
        let traced_dim: usize = traced.iter().map(|&p| basis.mode(p).dim).product();

        // local row-major strides within the kept and traced subspaces
        let local_strides = |positions: &[usize]| -> Vec<usize> {
            let mut s = vec![1usize; positions.len()];
            for i in (0..positions.len().saturating_sub(1)).rev() {
                s[i] = s[i + 1] * basis.mode(positions[i + 1]).dim;
            }
            s
        };
        let keep_strides = local_strides(keep);
        let traced_strides = local_strides(&traced);

        let full_index = |k: usize, t: usize| -> usize {
            let mut idx = 0;
            for (i, &p) in keep.iter().enumerate() {
                idx += ((k / keep_strides[i]) % basis.mode(p).dim) * basis.stride(p);
            }
            for (i, &p) in traced.iter().enumerate() {
                idx += ((t / traced_strides[i]) % basis.mode(p).dim) * basis.stride(p);
            }
            idx
        };

        let rho = self.to_density();
        let m = match &rho.data {
            StateData::Density(m) => m.clone(),
            _ => unreachable!(),
        };
        let mut out = DMatrix::zeros(keep_dim, keep_dim);
        for a in 0..keep_dim {
            for b in 0..keep_dim {
                let mut acc = Complex64::ZERO;
                for t in 0..traced_dim {
                    acc += m[(full_index(a, t), full_index(b, t))];
                }
                out[(a, b)] = acc;
            }
        }
        out
    }
}

/// Product thermal state: per site `diag(1−n_th, n_th)` and per bath
/// resonator `diag(1−n_th_res, n_th_res)`, higher levels unpopulated.
pub fn thermal_product_state(
    spec: &LatticeSpec,
    baths: &[BathSpec],
    basis: &Arc<BasisIndex>,
) -> Result<QuantumState, DynamicsError> {
    spec.validate()?;
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(basis.n_modes());
    let mut site_idx = 0usize;
    for mode in basis.modes() {
        let mut w = vec![0.0; mode.dim];
        match mode.kind {
            crate::fockspace::ModeKind::Site => {
                let n_th = spec.thermal_population[site_idx];
                w[0] = 1.0 - n_th;
                w[1] = n_th;
                site_idx += 1;
            }
            crate::fockspace::ModeKind::Resonator => {
                let n_th = baths
                    .iter()
                    .find(|b| LatticeSpec::resonator_label(b.site) == mode.label)
                    .map(|b| b.n_th_res)
                    .unwrap_or(0.0);
                w[0] = 1.0 - n_th;
                w[1] = n_th;
            }
        }
        weights.push(w);
    }
    let dim = basis.total_dim();
    let mut diag = DVector::zeros(dim);
    for s in 0..dim {
        let mut p = 1.0;
        for (m, w) in weights.iter().enumerate() {
            p *= w[basis.occupation_of(s, m)];
        }
        diag[s] = Complex64::new(p, 0.0);
    }
    Ok(QuantumState::density(basis.clone(), DMatrix::from_diagonal(&diag)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationAxis {
    X,
    Y,
}

/// Single-site rotation on a 2-level mode; density matrices are conjugated.
pub fn apply_rotation(
    state: &QuantumState,
    mode: &str,
    axis: RotationAxis,
    angle: f64,
) -> Result<QuantumState, DynamicsError> {
    let basis = &state.basis;
    let pos = basis.position(mode)?;
    if basis.mode(pos).dim != 2 {
        return Err(DynamicsError::NotTwoLevel(mode.to_string()));
    }
    let a = annihilation_op(basis, mode)?;
    let half = 0.5 * angle;
    // R = cos(θ/2)·I − i sin(θ/2)·σ_axis with σ_x = a + a†, σ_y = i(a† − a)
    let sigma = match axis {
        RotationAxis::X => a.add(&a.dagger())?,
        RotationAxis::Y => a.dagger().sub(&a)?.scaled(Complex64::new(0.0, 1.0)),
    };
    let r = SparseOperator::identity(basis.total_dim())
        .scaled(Complex64::new(half.cos(), 0.0))
        .add(&sigma.scaled(Complex64::new(0.0, -half.sin())))?;
    let data = match &state.data {
        StateData::Ket(v) => StateData::Ket(r.apply(v)?),
        StateData::Density(m) => {
            let rd = r.to_dense();
            StateData::Density(&rd * m * rd.adjoint())
        }
    };
    Ok(QuantumState { basis: basis.clone(), data })
}

/// Named Hermitian observable sampled along a trajectory.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub op: SparseOperator,
}

impl Observable {
    pub fn new(name: impl Into<String>, op: SparseOperator) -> Self {
        Self { name: name.into(), op }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Adaptive 5th-order Dormand-Prince with embedded 4th-order error
    /// estimate.
    AdaptiveRk45,
    FixedRk4,
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// Step cap, µs. Defaults to `0.2 / spectral_radius_bound`.
    pub max_step: Option<f64>,
    /// Keep a full state copy at every sample time.
    pub store_states: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk45,
            rtol: 1e-8,
            atol: 1e-10,
            max_step: None,
            store_states: false,
        }
    }
}

impl IntegratorConfig {
    pub fn tight() -> Self {
        Self { rtol: 1e-12, atol: 1e-13, ..Self::default() }
    }
}

/// Observable records along an evolution, one row per requested time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// `values[k][m]` is observable `m` at `times[k]`.
    pub values: Vec<Vec<f64>>,
    pub states: Option<Vec<QuantumState>>,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let m = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[m]).collect())
    }

    /// CSV export: `time` column followed by the named observables.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "time_us")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            write!(w, "{t:.16e}")?;
            for v in row {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

enum Generator {
    Schrodinger {
        terms: Vec<(Coeff, CsrMatrix)>,
    },
    Lindblad {
        terms: Vec<(Coeff, CsrMatrix)>,
        collapse: Vec<CsrMatrix>,
        /// `-½ Σ c†c`, applied from both sides.
        drift: Option<CsrMatrix>,
        tmp: Vec<Complex64>,
    },
}

impl Generator {
    fn rhs(&mut self, t: f64, y: &[Complex64], out: &mut [Complex64]) {
        out.fill(Complex64::ZERO);
        match self {
            Generator::Schrodinger { terms } => {
                for (coeff, a) in terms.iter() {
                    let c = coeff.eval(t);
                    if c != 0.0 {
                        a.acc_mul_vec(Complex64::new(0.0, -c), y, out);
                    }
                }
            }
            Generator::Lindblad { terms, collapse, drift, tmp } => {
                for (coeff, a) in terms.iter() {
                    let c = coeff.eval(t);
                    if c != 0.0 {
                        a.acc_mul_left(Complex64::new(0.0, -c), y, out);
                        a.acc_mul_right(Complex64::new(0.0, c), y, out);
                    }
                }
                if let Some(d) = drift {
                    d.acc_mul_left(Complex64::ONE, y, out);
                    d.acc_mul_right(Complex64::ONE, y, out);
                }
                for c in collapse.iter() {
                    tmp.fill(Complex64::ZERO);
                    c.acc_mul_left(Complex64::ONE, y, tmp);
                    c.acc_mul_right_dagger(Complex64::ONE, tmp, out);
                }
            }
        }
    }
}

// Internal tolerance safety: the embedded estimate bounds the local error
// of the discarded 4th-order solution, so steps are accepted against a
// tightened threshold to land the global error of the propagated 5th-order
// solution near the nominal rtol over µs-scale horizons.
const TOL_SAFETY: f64 = 0.02;

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// b - b*: weights of the embedded error estimate (7 stages with FSAL)
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

struct Integrator<'a> {
    gen: &'a mut Generator,
    cfg: &'a IntegratorConfig,
    max_step: f64,
    y: Vec<Complex64>,
    k: [Vec<Complex64>; 7],
    y_stage: Vec<Complex64>,
    y_new: Vec<Complex64>,
    t: f64,
    h: f64,
    fsal_valid: bool,
    // current segment; coefficient evaluation is nudged just inside it so
    // windowed terms take their left limit at the segment end and their
    // right limit at the start, keeping parameter steps exact
    seg: (f64, f64),
}

impl<'a> Integrator<'a> {
    fn new(
        gen: &'a mut Generator,
        cfg: &'a IntegratorConfig,
        max_step: f64,
        y0: Vec<Complex64>,
        t0: f64,
    ) -> Self {
        let n = y0.len();
        let zeros = vec![Complex64::ZERO; n];
        Self {
            gen,
            cfg,
            max_step,
            y: y0,
            k: std::array::from_fn(|_| zeros.clone()),
            y_stage: zeros.clone(),
            y_new: zeros,
            t: t0,
            h: max_step,
            fsal_valid: false,
            seg: (t0, t0),
        }
    }

    fn rhs(&mut self, t: f64, y_is_stage: bool, slot: usize) {
        let (lo, hi) = self.seg;
        let eps = 1e-12 * (hi - lo);
        let tc = if hi > lo { t.clamp(lo + eps, hi - eps) } else { t };
        let (head, tail) = self.k.split_at_mut(slot);
        let _ = head;
        let y = if y_is_stage { &self.y_stage } else { &self.y };
        self.gen.rhs(tc, y, &mut tail[0]);
    }

    /// Advance to exactly `t_end` (an event boundary: breakpoint or sample).
    fn advance_to(&mut self, t_end: f64) -> Result<(), DynamicsError> {
        self.seg = (self.t, t_end);
        match self.cfg.method {
            Method::AdaptiveRk45 => self.advance_adaptive(t_end),
            Method::FixedRk4 => self.advance_rk4(t_end),
        }
    }

    fn advance_adaptive(&mut self, t_end: f64) -> Result<(), DynamicsError> {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let n = self.y.len();
        let h_min = span.abs().max(1.0) * 1e-14;
        if !self.fsal_valid {
            self.rhs(self.t, false, 0);
        }
        loop {
            if self.t >= t_end - 1e-15 * t_end.abs().max(1.0) {
                self.t = t_end;
                // coefficients may jump at the boundary: recompute f there
                self.fsal_valid = false;
                return Ok(());
            }
            let h = self.h.min(self.max_step).min(t_end - self.t);
            // stages 2..7; k[6] is the FSAL slot
            for s in 0..6 {
                self.y_stage.copy_from_slice(&self.y);
                for (j, kj) in self.k.iter().enumerate().take(s + 1) {
                    let a = A[s][j];
                    if a != 0.0 {
                        let w = Complex64::new(a * h, 0.0);
                        for (ys, kv) in self.y_stage.iter_mut().zip(kj) {
                            *ys += w * kv;
                        }
                    }
                }
                self.rhs(self.t + C[s] * h, true, s + 1);
            }
            // 5th-order solution is the 6th stage argument (A row 5 = b)
            self.y_new.copy_from_slice(&self.y_stage);
            // embedded error estimate with component scaling
            let mut err_sq = 0.0f64;
            for i in 0..n {
                let mut e = Complex64::ZERO;
                for (j, kj) in self.k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += Complex64::new(E[j] * h, 0.0) * kj[i];
                    }
                }
                let sc = TOL_SAFETY
                    * (self.cfg.atol + self.cfg.rtol * self.y[i].norm().max(self.y_new[i].norm()));
                let r = e.norm() / sc;
                err_sq += r * r;
            }
            let err = (err_sq / n as f64).sqrt();
            if err <= 1.0 {
                self.t += h;
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6); // FSAL
                self.fsal_valid = true;
                let factor =
                    if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                self.h = (h * factor).min(self.max_step);
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if self.h < h_min {
                    return Err(DynamicsError::StepUnderflow { t: self.t, err });
                }
                // k[0] still holds f(t, y); redo stages with smaller h
            }
        }
    }

    fn advance_rk4(&mut self, t_end: f64) -> Result<(), DynamicsError> {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        let steps = (span / self.max_step).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let n = self.y.len();
        for s in 0..steps {
            let t = self.t + s as f64 * h;
            self.rhs(t, false, 0);
            for i in 0..n {
                self.y_stage[i] = self.y[i] + Complex64::new(0.5 * h, 0.0) * self.k[0][i];
            }
            self.rhs(t + 0.5 * h, true, 1);
            for i in 0..n {
                self.y_stage[i] = self.y[i] + Complex64::new(0.5 * h, 0.0) * self.k[1][i];
            }
            self.rhs(t + 0.5 * h, true, 2);
            for i in 0..n {
                self.y_stage[i] = self.y[i] + Complex64::new(h, 0.0) * self.k[2][i];
            }
            self.rhs(t + h, true, 3);
            for i in 0..n {
                self.y[i] += Complex64::new(h / 6.0, 0.0)
                    * (self.k[0][i]
                        + Complex64::new(2.0, 0.0) * self.k[1][i]
                        + Complex64::new(2.0, 0.0) * self.k[2][i]
                        + self.k[3][i]);
            }
        }
        self.t = t_end;
        Ok(())
    }
}

/// Evolve a state under `dρ/dt = −i[H(t), ρ] + Σ_k (c_k ρ c_k† − ½{c_k†c_k, ρ})`.
///
/// With an empty collapse list and a ket input, the Schrödinger equation is
/// integrated directly; any collapse operator promotes the state to a
/// density matrix. Observables are recorded at `sample_times`, which must
/// lie inside `tspan`.
pub fn evolve(
    initial: &QuantumState,
    hamiltonian: &TimeDepOperator,
    collapse: &[SparseOperator],
    tspan: (f64, f64),
    sample_times: &[f64],
    observables: &[Observable],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    let (t0, t1) = tspan;
    if t1 <= t0 {
        return Err(DynamicsError::EmptySpan);
    }
    if cfg.rtol <= 0.0 || cfg.atol <= 0.0 {
        return Err(DynamicsError::BadTolerance);
    }
    let dim = initial.dim();
    if hamiltonian.dim() != dim {
        return Err(DynamicsError::DimensionMismatch { state: dim, op: hamiltonian.dim() });
    }
    for c in collapse {
        if c.dim() != dim {
            return Err(DynamicsError::DimensionMismatch { state: dim, op: c.dim() });
        }
    }
    for w in sample_times.windows(2) {
        if w[1] < w[0] {
            return Err(DynamicsError::UnorderedSamples);
        }
    }
    if let (Some(&first), Some(&last)) = (sample_times.first(), sample_times.last()) {
        let eps = 1e-9 * (t1 - t0).abs();
        if first < t0 - eps || last > t1 + eps {
            return Err(DynamicsError::SampleOutsideSpan(
                if first < t0 - eps { first } else { last },
                t0,
                t1,
            ));
        }
    }

    let use_density = initial.is_density() || !collapse.is_empty();
    let state = if use_density { initial.to_density() } else { initial.clone() };

    let csr_terms: Vec<(Coeff, CsrMatrix)> = hamiltonian
        .terms()
        .iter()
        .map(|(c, op)| (c.clone(), CsrMatrix::from_sparse(op)))
        .collect();

    let mut generator = if use_density {
        let collapse_csr: Vec<CsrMatrix> = collapse.iter().map(CsrMatrix::from_sparse).collect();
        let drift = if collapse.is_empty() {
            None
        } else {
            let mut d = SparseOperator::zero(dim);
            for c in collapse {
                d = d.add(&c.dagger().mul(c)?.scaled(Complex64::new(-0.5, 0.0)))?;
            }
            Some(CsrMatrix::from_sparse(&d))
        };
        Generator::Lindblad {
            terms: csr_terms,
            collapse: collapse_csr,
            drift,
            tmp: vec![Complex64::ZERO; dim * dim],
        }
    } else {
        Generator::Schrodinger { terms: csr_terms }
    };

    let y0: Vec<Complex64> = match &state.data {
        StateData::Ket(v) => v.as_slice().to_vec(),
        StateData::Density(m) => m.as_slice().to_vec(),
    };

    let max_step = cfg.max_step.unwrap_or_else(|| {
        let radius = hamiltonian.spectral_radius_bound(t0, t1);
        if radius > 0.0 {
            (0.2 / radius).min(t1 - t0)
        } else {
            (t1 - t0) / 10.0
        }
    });

    // event times: schedule breakpoints and sample times, in order
    let mut events: Vec<(f64, bool)> = Vec::new(); // (time, is_sample)
    for t in hamiltonian.breakpoints_within(t0, t1) {
        events.push((t, false));
    }
    for &t in sample_times {
        events.push((t, true));
    }
    events.push((t1, false));
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut integ = Integrator::new(&mut generator, cfg, max_step, y0, t0);
    let names: Vec<String> = observables.iter().map(|o| o.name.clone()).collect();
    let mut traj = Trajectory {
        times: Vec::with_capacity(sample_times.len()),
        names,
        values: Vec::with_capacity(sample_times.len()),
        states: cfg.store_states.then(Vec::new),
    };

    let record = |y: &[Complex64],
                  t: f64,
                  traj: &mut Trajectory| {
        let snapshot = if use_density {
            let m = DMatrix::from_column_slice(dim, dim, y);
            QuantumState::density(state.basis.clone(), m)
        } else {
            QuantumState::ket(state.basis.clone(), DVector::from_column_slice(y))
        };
        let row = observables.iter().map(|o| snapshot.expectation(&o.op).re).collect();
        traj.times.push(t);
        traj.values.push(row);
        if let Some(states) = traj.states.as_mut() {
            states.push(snapshot);
        }
    };

    for (t_event, is_sample) in events {
        integ.advance_to(t_event)?;
        if is_sample {
            record(&integ.y, t_event, &mut traj);
        }
    }
    Ok(traj)
}
