//! Lattice, drive, and bath models.
//!
//! Everything here works in the frame co-rotating at the lattice frequency;
//! absolute frequencies only enter through [`sideband_rate`]. All rates are
//! angular frequencies in rad/µs, times in µs. Tunneling uses the `+J a†a`
//! sign convention, which puts the uniform-phase single-particle mode at the
//! top of the band; the coherent-filling experiments adiabatically follow
//! those highest-energy states.

use num_complex::Complex64;
use thiserror::Error;

use crate::fockspace::{
    annihilation_op, hop_op, number_op, pair_create_op, total_number_op, BasisIndex, FockError,
    ModeSpec, SparseOperator,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("lattice needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("{field} has length {got}, expected {want}")]
    FieldLength { field: &'static str, got: usize, want: usize },
    #[error("basis has {got} site modes but lattice has {want}")]
    SiteCountMismatch { got: usize, want: usize },
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("thermal population {0} outside [0, 0.5)")]
    ThermalOutOfRange(f64),
    #[error("negative rate: {field} = {value}")]
    NegativeRate { field: &'static str, value: f64 },
    #[error("time {t} outside the schedule support [{start}, {end}]")]
    OutsideSchedule { t: f64, start: f64, end: f64 },
    #[error("schedule breakpoints must be strictly increasing")]
    NonMonotoneBreakpoints,
    #[error("drive amplitude must be nonnegative")]
    NegativeAmplitude,
    #[error("bath window ({0}, {1}) is not ordered")]
    BadWindow(f64, f64),
    #[error("bath site {site} outside lattice of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("red sideband undefined for ω_r = ω_q")]
    RedSidebandDegenerate,
    #[error("sideband parameter {field} must be positive, got {value}")]
    BadSideband { field: &'static str, value: f64 },
    #[error("basis is missing resonator mode `{0}`")]
    MissingResonator(String),
}

/// Static description of the Bose-Hubbard lattice, decoherence included.
///
/// `tunneling` is per nearest-neighbor bond (length `n_sites - 1`);
/// `interaction`, `on_site`, `thermal_population`, and the decoherence times
/// are per site. `site_dim = 2` is the hard-core limit, where the on-site
/// interaction term vanishes identically.
#[derive(Clone, Debug)]
pub struct LatticeSpec {
    pub n_sites: usize,
    /// Nearest-neighbor tunneling per bond, rad/µs.
    pub tunneling: Vec<f64>,
    /// Next-nearest-neighbor tunneling, rad/µs.
    pub tunneling_nnn: f64,
    /// On-site interaction U per site, rad/µs.
    pub interaction: Vec<f64>,
    /// On-site energy in the rotating frame per site, rad/µs.
    pub on_site: Vec<f64>,
    /// Local Hilbert dimension per site; 2 = hard-core.
    pub site_dim: usize,
    /// Relaxation time per site, µs. `None` disables relaxation.
    pub t1: Option<Vec<f64>>,
    /// Pure dephasing time per site, µs. `None` disables dephasing.
    pub tphi: Option<Vec<f64>>,
    /// Equilibrium thermal population per site.
    pub thermal_population: Vec<f64>,
}

impl LatticeSpec {
    /// Uniform hard-core lattice with tunneling `j` (rad/µs), no disorder,
    /// no decoherence.
    pub fn uniform(n_sites: usize, j: f64) -> Self {
        Self {
            n_sites,
            tunneling: vec![j; n_sites.saturating_sub(1)],
            tunneling_nnn: 0.0,
            interaction: vec![0.0; n_sites],
            on_site: vec![0.0; n_sites],
            site_dim: 2,
            t1: None,
            tphi: None,
            thermal_population: vec![0.0; n_sites],
        }
    }

    pub fn with_nnn(mut self, j_nnn: f64) -> Self {
        self.tunneling_nnn = j_nnn;
        self
    }

    pub fn with_thermal(mut self, n_th: f64) -> Self {
        self.thermal_population = vec![n_th; self.n_sites];
        self
    }

    pub fn with_decoherence(mut self, t1: f64, tphi: f64) -> Self {
        self.t1 = Some(vec![t1; self.n_sites]);
        self.tphi = Some(vec![tphi; self.n_sites]);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_sites < 2 {
            return Err(ModelError::TooFewSites(self.n_sites));
        }
        let check_len = |field, got: usize, want: usize| {
            if got != want {
                Err(ModelError::FieldLength { field, got, want })
            } else {
                Ok(())
            }
        };
        check_len("tunneling", self.tunneling.len(), self.n_sites - 1)?;
        check_len("interaction", self.interaction.len(), self.n_sites)?;
        check_len("on_site", self.on_site.len(), self.n_sites)?;
        check_len("thermal_population", self.thermal_population.len(), self.n_sites)?;
        if let Some(t1) = &self.t1 {
            check_len("t1", t1.len(), self.n_sites)?;
            for &t in t1 {
                if t <= 0.0 {
                    return Err(ModelError::NonPositive { field: "t1", value: t });
                }
            }
        }
        if let Some(tphi) = &self.tphi {
            check_len("tphi", tphi.len(), self.n_sites)?;
            for &t in tphi {
                if t <= 0.0 {
                    return Err(ModelError::NonPositive { field: "tphi", value: t });
                }
            }
        }
        for &n in &self.thermal_population {
            if !(0.0..0.5).contains(&n) {
                return Err(ModelError::ThermalOutOfRange(n));
            }
        }
        Ok(())
    }

    pub fn site_label(i: usize) -> String {
        format!("q{i}")
    }

    pub fn resonator_label(site: usize) -> String {
        format!("r{site}")
    }

    /// Basis of the bare lattice (site modes only).
    pub fn site_basis(&self) -> Result<BasisIndex, ModelError> {
        self.validate()?;
        let modes = (0..self.n_sites)
            .map(|i| ModeSpec::site(Self::site_label(i), self.site_dim))
            .collect();
        Ok(BasisIndex::new(modes)?)
    }

    /// Basis with one resonator mode appended per bath, sites first.
    pub fn basis_with_baths(
        &self,
        baths: &[BathSpec],
        resonator_dim: usize,
    ) -> Result<BasisIndex, ModelError> {
        self.validate()?;
        let mut modes: Vec<ModeSpec> = (0..self.n_sites)
            .map(|i| ModeSpec::site(Self::site_label(i), self.site_dim))
            .collect();
        for b in baths {
            modes.push(ModeSpec::resonator(Self::resonator_label(b.site), resonator_dim));
        }
        Ok(BasisIndex::new(modes)?)
    }
}

/// Piecewise-linear scalar schedule with strictly increasing breakpoints.
#[derive(Clone, Debug)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::NonMonotoneBreakpoints);
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModelError::NonMonotoneBreakpoints);
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64, start: f64, end: f64) -> Self {
        Self { points: vec![(start, value), (end, value)] }
    }

    pub fn start(&self) -> f64 {
        self.points[0].0
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn supports(&self, t: f64) -> bool {
        t >= self.start() - 1e-12 && t <= self.end() + 1e-12
    }

    /// Linear interpolation; clamps outside the support.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.start() {
            return self.points[0].1;
        }
        if t >= self.end() {
            return self.points[self.points.len() - 1].1;
        }
        let k = self.points.partition_point(|&(tp, _)| tp <= t);
        let (t0, v0) = self.points[k - 1];
        let (t1, v1) = self.points[k];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|&(t, _)| t)
    }
}

/// Global coherent drive: common Rabi amplitude and detuning schedules plus
/// a per-site phase.
#[derive(Clone, Debug)]
pub struct DriveSchedule {
    /// Rabi amplitude Ω(t) ≥ 0, rad/µs.
    pub omega: PiecewiseLinear,
    /// Drive detuning Δ(t) from the lattice frequency, rad/µs.
    pub delta: PiecewiseLinear,
    /// Drive phase per site, radians.
    pub phases: Vec<f64>,
}

impl DriveSchedule {
    pub fn validate(&self, n_sites: usize) -> Result<(), ModelError> {
        if self.phases.len() != n_sites {
            return Err(ModelError::FieldLength {
                field: "phases",
                got: self.phases.len(),
                want: n_sites,
            });
        }
        if self.omega.points.iter().any(|&(_, v)| v < 0.0) {
            return Err(ModelError::NegativeAmplitude);
        }
        Ok(())
    }

    pub fn supports(&self, t: f64) -> bool {
        self.omega.supports(t) && self.delta.supports(t)
    }

    fn support(&self) -> (f64, f64) {
        (
            self.omega.start().max(self.delta.start()),
            self.omega.end().min(self.delta.end()),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BathKind {
    /// Excitation swap into a lossy resonator (red sideband).
    Drain,
    /// Pair creation with one excitation lost through the resonator
    /// (blue sideband).
    Source,
}

/// One engineered local particle bath: a lossy resonator parametrically
/// coupled to a single lattice site during a time window.
#[derive(Clone, Debug)]
pub struct BathSpec {
    pub kind: BathKind,
    /// Lattice site the bath couples to.
    pub site: usize,
    /// Effective bath-lattice coupling rate, rad/µs.
    pub g: f64,
    /// Effective bath-lattice detuning, rad/µs. δ > 0 puts the bath above
    /// the lattice frequency, resonant with eigenstates at energy +δ.
    pub delta: f64,
    /// Resonator linewidth, rad/µs.
    pub kappa: f64,
    /// Resonator thermal population.
    pub n_th_res: f64,
    /// (t_on, t_off) window in µs during which the coupling is active.
    pub window: (f64, f64),
}

impl BathSpec {
    pub fn validate(&self, n_sites: usize) -> Result<(), ModelError> {
        if self.site >= n_sites {
            return Err(ModelError::SiteOutOfRange { site: self.site, n_sites });
        }
        if self.g < 0.0 {
            return Err(ModelError::NegativeRate { field: "g", value: self.g });
        }
        if self.kappa <= 0.0 {
            return Err(ModelError::NonPositive { field: "kappa", value: self.kappa });
        }
        if self.n_th_res < 0.0 {
            return Err(ModelError::NegativeRate { field: "n_th_res", value: self.n_th_res });
        }
        if self.window.0 >= self.window.1 {
            return Err(ModelError::BadWindow(self.window.0, self.window.1));
        }
        Ok(())
    }
}

/// Parametric sideband drive parameters, lab frame. All angular frequencies
/// in the same unit (they only enter as ratios times `g_bare`).
#[derive(Clone, Copy, Debug)]
pub struct SidebandDrive {
    /// Frequency-modulation amplitude.
    pub a_mod: f64,
    /// Resonator frequency.
    pub omega_r: f64,
    /// Qubit (site) frequency.
    pub omega_q: f64,
    /// Bare transmon-resonator coupling.
    pub g_bare: f64,
    pub kind: BathKind,
}

/// Effective sideband coupling rate `g · J₁(A_mod / denom)` with
/// `denom = |ω_r − ω_q|` for the drain (red) and `ω_r + ω_q` for the
/// source (blue).
pub fn sideband_rate(sd: &SidebandDrive) -> Result<f64, ModelError> {
    for (field, value) in [
        ("a_mod", sd.a_mod),
        ("omega_r", sd.omega_r),
        ("omega_q", sd.omega_q),
        ("g_bare", sd.g_bare),
    ] {
        if value < 0.0 {
            return Err(ModelError::BadSideband { field, value });
        }
    }
    let denom = match sd.kind {
        BathKind::Drain => {
            let d = (sd.omega_r - sd.omega_q).abs();
            if d == 0.0 {
                return Err(ModelError::RedSidebandDegenerate);
            }
            d
        }
        BathKind::Source => sd.omega_r + sd.omega_q,
    };
    Ok(libm::j1(sd.a_mod / denom) * sd.g_bare)
}

fn check_site_basis(spec: &LatticeSpec, basis: &BasisIndex) -> Result<(), ModelError> {
    let got = basis.n_sites();
    if got != spec.n_sites {
        return Err(ModelError::SiteCountMismatch { got, want: spec.n_sites });
    }
    Ok(())
}

/// Static Bose-Hubbard Hamiltonian
/// `H/ħ = Σ_bonds J (a_i†a_j + h.c.) + J_nnn Σ (a_i†a_{i+2} + h.c.)
///       + (U/2) Σ n_i(n_i−1) + Σ ε_i n_i`.
pub fn bose_hubbard_hamiltonian(
    spec: &LatticeSpec,
    basis: &BasisIndex,
) -> Result<SparseOperator, ModelError> {
    spec.validate()?;
    check_site_basis(spec, basis)?;
    let dim = basis.total_dim();
    let mut h = SparseOperator::zero(dim);

    for (b, &j) in spec.tunneling.iter().enumerate() {
        if j == 0.0 {
            continue;
        }
        let hop = hop_op(
            basis,
            &LatticeSpec::site_label(b),
            &LatticeSpec::site_label(b + 1),
        )?;
        let c = Complex64::new(j, 0.0);
        h = h.add(&hop.scaled(c))?.add(&hop.dagger().scaled(c))?;
    }
    if spec.tunneling_nnn != 0.0 {
        let c = Complex64::new(spec.tunneling_nnn, 0.0);
        for i in 0..spec.n_sites.saturating_sub(2) {
            let hop = hop_op(
                basis,
                &LatticeSpec::site_label(i),
                &LatticeSpec::site_label(i + 2),
            )?;
            h = h.add(&hop.scaled(c))?.add(&hop.dagger().scaled(c))?;
        }
    }

    // diagonal interaction and on-site terms built directly from occupations
    let site_positions = basis.site_positions();
    let mut diag = vec![0.0f64; dim];
    for s in 0..dim {
        let mut e = 0.0;
        for (i, &p) in site_positions.iter().enumerate() {
            let n = basis.occupation_of(s, p) as f64;
            e += 0.5 * spec.interaction[i] * n * (n - 1.0) + spec.on_site[i] * n;
        }
        diag[s] = e;
    }
    h = h.add(&SparseOperator::from_diagonal(&diag))?;
    Ok(h)
}

/// The drive coupling operator `Σ_i (a_i† e^{iφ_i} + a_i e^{−iφ_i}) / 2`;
/// the full drive term is this times Ω(t).
pub fn drive_coupling_op(
    phases: &[f64],
    basis: &BasisIndex,
) -> Result<SparseOperator, ModelError> {
    let mut d = SparseOperator::zero(basis.total_dim());
    for (i, &phi) in phases.iter().enumerate() {
        let a = annihilation_op(basis, &LatticeSpec::site_label(i))?;
        let c = Complex64::from_polar(0.5, phi);
        d = d.add(&a.dagger().scaled(c))?.add(&a.scaled(c.conj()))?;
    }
    Ok(d)
}

/// Driven Hamiltonian at time `t`:
/// `H_BH + Σ_i (Ω(t)/2)(a_i† e^{iφ_i} + h.c.) − Δ(t) Σ_i n_i`.
pub fn driven_hamiltonian(
    spec: &LatticeSpec,
    drive: &DriveSchedule,
    t: f64,
    basis: &BasisIndex,
) -> Result<SparseOperator, ModelError> {
    drive.validate(spec.n_sites)?;
    if !drive.supports(t) {
        let (start, end) = drive.support();
        return Err(ModelError::OutsideSchedule { t, start, end });
    }
    let mut h = bose_hubbard_hamiltonian(spec, basis)?;
    let omega = drive.omega.eval(t);
    if omega != 0.0 {
        let d = drive_coupling_op(&drive.phases, basis)?;
        h = h.add(&d.scaled(Complex64::new(omega, 0.0)))?;
    }
    let delta = drive.delta.eval(t);
    if delta != 0.0 {
        let n = total_number_op(basis)?;
        h = h.add(&n.scaled(Complex64::new(-delta, 0.0)))?;
    }
    Ok(h)
}

/// Bath coupling Hamiltonian in the lattice rotating frame.
///
/// Drain: `g (a†b + b†a) + δ b†b`; source: `g (a†b† + ba) − δ b†b`. Both
/// sign choices make the bath resonant with lattice excitations at energy
/// +δ, so a positive detuning addresses eigenstates above the lattice
/// frequency. A bath with `g = 0` is inert and yields the zero operator.
pub fn bath_hamiltonian(
    bath: &BathSpec,
    basis: &BasisIndex,
) -> Result<SparseOperator, ModelError> {
    bath.validate(basis.n_sites())?;
    let res = LatticeSpec::resonator_label(bath.site);
    if basis.position(&res).is_err() {
        return Err(ModelError::MissingResonator(res));
    }
    if bath.g == 0.0 {
        return Ok(SparseOperator::zero(basis.total_dim()));
    }
    let site = LatticeSpec::site_label(bath.site);
    let g = Complex64::new(bath.g, 0.0);
    let n_res = number_op(basis, &res)?;
    match bath.kind {
        BathKind::Drain => {
            let swap = hop_op(basis, &site, &res)?; // a† b
            let h = swap.scaled(g).add(&swap.dagger().scaled(g))?;
            Ok(h.add(&n_res.scaled(Complex64::new(bath.delta, 0.0)))?)
        }
        BathKind::Source => {
            let pair = pair_create_op(basis, &site, &res)?; // a† b†
            let h = pair.scaled(g).add(&pair.dagger().scaled(g))?;
            Ok(h.add(&n_res.scaled(Complex64::new(-bath.delta, 0.0)))?)
        }
    }
}

/// Driven Hamiltonian split into terms with scalar time dependence, for
/// the integrator: `H_BH + Ω(t)·D(φ) − Δ(t)·N̂`.
pub fn driven_hamiltonian_terms(
    spec: &LatticeSpec,
    drive: &DriveSchedule,
    basis: &BasisIndex,
) -> Result<crate::dynamics::TimeDepOperator, ModelError> {
    use crate::dynamics::Coeff;
    drive.validate(spec.n_sites)?;
    let mut h = crate::dynamics::TimeDepOperator::new(basis.total_dim());
    h.push(Coeff::Const(1.0), bose_hubbard_hamiltonian(spec, basis)?);
    h.push(Coeff::Piecewise(drive.omega.clone()), drive_coupling_op(&drive.phases, basis)?);
    h.push(
        Coeff::Piecewise(drive.delta.clone()),
        total_number_op(basis)?.scaled(Complex64::new(-1.0, 0.0)),
    );
    Ok(h)
}

/// Lattice Hamiltonian with windowed bath couplings, term-decomposed for
/// the integrator.
pub fn lattice_with_baths_terms(
    spec: &LatticeSpec,
    baths: &[BathSpec],
    basis: &BasisIndex,
) -> Result<crate::dynamics::TimeDepOperator, ModelError> {
    use crate::dynamics::Coeff;
    let mut h = crate::dynamics::TimeDepOperator::new(basis.total_dim());
    h.push(Coeff::Const(1.0), bose_hubbard_hamiltonian(spec, basis)?);
    for bath in baths {
        h.push(
            Coeff::Window { t_on: bath.window.0, t_off: bath.window.1, value: 1.0 },
            bath_hamiltonian(bath, basis)?,
        );
    }
    Ok(h)
}

/// Lindblad collapse operators for the lattice and any active baths.
///
/// Per site: `√(Γ₁(1+n_th)) a`, `√(Γ₁ n_th) a†`, `√(2Γ_φ) n` with
/// `Γ₁ = 1/T1` and `Γ_φ = 1/Tφ`; per bath resonator: `√(κ(1+n_th_res)) b`,
/// `√(κ n_th_res) b†`. Zero-rate operators are omitted, so a fully coherent
/// lattice yields an empty list.
pub fn collapse_operators(
    spec: &LatticeSpec,
    baths: &[BathSpec],
    basis: &BasisIndex,
) -> Result<Vec<SparseOperator>, ModelError> {
    spec.validate()?;
    check_site_basis(spec, basis)?;
    let mut ops = Vec::new();
    for i in 0..spec.n_sites {
        let label = LatticeSpec::site_label(i);
        let n_th = spec.thermal_population[i];
        if let Some(t1) = &spec.t1 {
            let g1 = 1.0 / t1[i];
            let a = annihilation_op(basis, &label)?;
            ops.push(a.scaled(Complex64::new((g1 * (1.0 + n_th)).sqrt(), 0.0)));
            if n_th > 0.0 {
                ops.push(a.dagger().scaled(Complex64::new((g1 * n_th).sqrt(), 0.0)));
            }
        }
        if let Some(tphi) = &spec.tphi {
            let gphi = 1.0 / tphi[i];
            let n = number_op(basis, &label)?;
            ops.push(n.scaled(Complex64::new((2.0 * gphi).sqrt(), 0.0)));
        }
    }
    for bath in baths {
        bath.validate(spec.n_sites)?;
        let res = LatticeSpec::resonator_label(bath.site);
        if basis.position(&res).is_err() {
            return Err(ModelError::MissingResonator(res));
        }
        let b = annihilation_op(basis, &res)?;
        ops.push(b.scaled(Complex64::new((bath.kappa * (1.0 + bath.n_th_res)).sqrt(), 0.0)));
        if bath.n_th_res > 0.0 {
            ops.push(b.dagger().scaled(Complex64::new((bath.kappa * bath.n_th_res).sqrt(), 0.0)));
        }
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;
    use approx::assert_abs_diff_eq;

    fn eigvals(op: &SparseOperator) -> Vec<f64> {
        let mut ev: Vec<f64> = op.to_dense().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn two_site_spectrum() {
        let j = mhz(5.8);
        let spec = LatticeSpec::uniform(2, j);
        let basis = spec.site_basis().unwrap();
        let h = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        let ev = eigvals(&h);
        assert_abs_diff_eq!(ev[0], -j, epsilon = 1e-10);
        assert_abs_diff_eq!(ev[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ev[2], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ev[3], j, epsilon = 1e-10);
        assert_abs_diff_eq!(ev[3], 36.44, epsilon = 0.01);
    }

    #[test]
    fn interaction_vanishes_on_hardcore_basis() {
        let j = mhz(5.8);
        let mut spec = LatticeSpec::uniform(3, j);
        spec.interaction = vec![mhz(-246.5); 3];
        let basis = spec.site_basis().unwrap();
        let h_u = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        spec.interaction = vec![0.0; 3];
        let h_0 = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        assert_eq!(h_u.entries(), h_0.entries());
    }

    #[test]
    fn four_site_single_particle_band() {
        // open-chain tight-binding: E_k = 2J cos(kπ/5)
        let j = 1.0;
        let spec = LatticeSpec::uniform(4, j);
        let basis = spec.site_basis().unwrap();
        let h = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        let dense = h.to_dense();
        // single-occupation block
        let idx: Vec<usize> = (0..16).filter(|&s| basis.site_occupation_total(s) == 1).collect();
        let block = nalgebra::DMatrix::from_fn(4, 4, |r, c| dense[(idx[r], idx[c])]);
        let mut ev: Vec<f64> = block.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(ev[0], -phi * j, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1], -(phi - 1.0) * j, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[2], (phi - 1.0) * j, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[3], phi * j, epsilon = 1e-12);
    }

    #[test]
    fn hamiltonians_are_hermitian() {
        let mut spec = LatticeSpec::uniform(3, mhz(5.8)).with_nnn(mhz(0.55));
        spec.on_site = vec![mhz(1.0), 0.0, mhz(-2.0)];
        spec.site_dim = 3;
        spec.interaction = vec![mhz(-246.0); 3];
        let basis = spec.site_basis().unwrap();
        let h = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        assert_eq!(h.hermiticity_defect(), 0.0);
        let drive = DriveSchedule {
            omega: PiecewiseLinear::new(vec![(0.0, 0.0), (0.3, mhz(4.2)), (1.0, mhz(4.2))]).unwrap(),
            delta: PiecewiseLinear::constant(mhz(30.0), 0.0, 1.0),
            phases: vec![0.0, 0.3, std::f64::consts::PI],
        };
        let hd = driven_hamiltonian(&spec, &drive, 0.5, &basis).unwrap();
        assert!(hd.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn number_conservation() {
        let spec = LatticeSpec::uniform(4, mhz(5.8)).with_nnn(mhz(0.55));
        let basis = spec.site_basis().unwrap();
        let h = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        let n = total_number_op(&basis).unwrap();
        assert!(n.commutator(&h).unwrap().is_zero());
        // the drive term breaks conservation
        let d = drive_coupling_op(&[0.0; 4], &basis).unwrap();
        assert!(!n.commutator(&d).unwrap().is_zero());
    }

    #[test]
    fn driven_reduces_to_static_at_zero_drive() {
        let spec = LatticeSpec::uniform(2, mhz(5.8));
        let basis = spec.site_basis().unwrap();
        let drive = DriveSchedule {
            omega: PiecewiseLinear::constant(0.0, 0.0, 1.0),
            delta: PiecewiseLinear::constant(0.0, 0.0, 1.0),
            phases: vec![0.0; 2],
        };
        let hd = driven_hamiltonian(&spec, &drive, 0.5, &basis).unwrap();
        let h = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
        assert_eq!(hd.entries(), h.entries());
        assert!(matches!(
            driven_hamiltonian(&spec, &drive, 2.0, &basis),
            Err(ModelError::OutsideSchedule { .. })
        ));
    }

    #[test]
    fn single_site_drive_matrix_element() {
        // one driven mode: off-diagonal element Ω/2
        let basis = BasisIndex::new(vec![ModeSpec::hardcore_site("q0")]).unwrap();
        let d = drive_coupling_op(&[0.0], &basis).unwrap();
        let omega = mhz(4.2);
        let term = d.scaled(Complex64::new(omega, 0.0));
        let m = term.to_dense();
        assert_abs_diff_eq!(m[(0, 1)].re, omega / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(0, 1)].re, 13.19, epsilon = 0.01);
    }

    #[test]
    fn uniform_drive_decouples_from_lowest_band_state() {
        // alternating-sign ground mode is orthogonal to the uniform drive
        let spec = LatticeSpec::uniform(4, 1.0);
        let basis = spec.site_basis().unwrap();
        let h = bose_hubbard_hamiltonian(&spec, &basis).unwrap().to_dense();
        let idx: Vec<usize> = (0..16).filter(|&s| basis.site_occupation_total(s) == 1).collect();
        let block = nalgebra::DMatrix::from_fn(4, 4, |r, c| h[(idx[r], idx[c])]);
        let eig = block.symmetric_eigen();
        let k_min = (0..4)
            .min_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap())
            .unwrap();
        let d = drive_coupling_op(&[0.0; 4], &basis).unwrap().to_dense();
        let vac = 0usize;
        let elem: Complex64 = (0..4)
            .map(|r| eig.eigenvectors[(r, k_min)].conj() * d[(idx[r], vac)])
            .sum();
        assert!(elem.norm() < 1e-12);
    }

    #[test]
    fn bath_blocks() {
        let spec = LatticeSpec::uniform(2, 0.0);
        let g = mhz(1.75);
        let drain = BathSpec {
            kind: BathKind::Drain,
            site: 0,
            g,
            delta: 0.0,
            kappa: mhz(1.5),
            n_th_res: 0.0,
            window: (0.0, 2.0),
        };
        let basis = spec.basis_with_baths(&[drain.clone()], 2).unwrap();
        let h = bath_hamiltonian(&drain, &basis).unwrap();
        // swaps |1>_q |0>_r and |0>_q |1>_r with amplitude g
        let one_q = basis.index_of(&[1, 0, 0]);
        let one_r = basis.index_of(&[0, 0, 1]);
        let m = h.to_dense();
        assert_abs_diff_eq!(m[(one_q, one_r)].re, g, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(one_r, one_q)].re, g, epsilon = 1e-12);
        // drain conserves site + resonator excitation number
        for &(r, c, _) in h.entries() {
            let occ_r = basis.occupations(r as usize);
            let occ_c = basis.occupations(c as usize);
            let tot = |o: &[usize]| o[0] + o[2];
            assert_eq!(tot(&occ_r), tot(&occ_c));
        }

        let source = BathSpec { kind: BathKind::Source, g: mhz(2.4), ..drain };
        let basis = spec.basis_with_baths(&[source.clone()], 2).unwrap();
        let h = bath_hamiltonian(&source, &basis).unwrap();
        let vac = basis.index_of(&[0, 0, 0]);
        let pair = basis.index_of(&[1, 0, 1]);
        assert_abs_diff_eq!(h.to_dense()[(pair, vac)].re, mhz(2.4), epsilon = 1e-12);
        // the source coupling changes the joint excitation number by ±2 only
        for &(r, c, _) in h.entries() {
            let occ_r = basis.occupations(r as usize);
            let occ_c = basis.occupations(c as usize);
            let tot = |o: &[usize]| (o[0] + o[2]) as i64;
            let dn = tot(&occ_r) - tot(&occ_c);
            assert!(dn == 2 || dn == -2, "entry changes number by {dn}");
        }

        let inert = BathSpec { g: 0.0, delta: mhz(3.0), ..source };
        let basis = spec.basis_with_baths(&[inert.clone()], 2).unwrap();
        assert!(bath_hamiltonian(&inert, &basis).unwrap().is_zero());
    }

    #[test]
    fn bath_detuning_signs() {
        // both bath kinds are resonant with a site excitation at energy +δ:
        // the coupled pair of levels is degenerate when δ matches the site
        let spec = {
            let mut s = LatticeSpec::uniform(2, 0.0);
            s.on_site = vec![mhz(3.0), 0.0];
            s
        };
        let delta = mhz(3.0);
        for kind in [BathKind::Drain, BathKind::Source] {
            let bath = BathSpec {
                kind,
                site: 0,
                g: 0.0,
                delta,
                kappa: mhz(1.5),
                n_th_res: 0.0,
                window: (0.0, 1.0),
            };
            let basis = spec.basis_with_baths(&[bath.clone()], 2).unwrap();
            let h_lattice = bose_hubbard_hamiltonian(&spec, &basis).unwrap();
            let bath_coupled = BathSpec { g: mhz(0.001), ..bath };
            let h_bath = bath_hamiltonian(&bath_coupled, &basis).unwrap();
            let h = h_lattice.add(&h_bath).unwrap().to_dense();
            match kind {
                BathKind::Drain => {
                    // |1;0>_site,res and |0;1> degenerate diagonal energies
                    let e_site = h[(basis.index_of(&[1, 0, 0]), basis.index_of(&[1, 0, 0]))].re;
                    let e_res = h[(basis.index_of(&[0, 0, 1]), basis.index_of(&[0, 0, 1]))].re;
                    assert_abs_diff_eq!(e_site, e_res, epsilon = 1e-12);
                }
                BathKind::Source => {
                    // pair state |1;1> degenerate with the vacuum
                    let e_pair = h[(basis.index_of(&[1, 0, 1]), basis.index_of(&[1, 0, 1]))].re;
                    let e_vac = h[(basis.index_of(&[0, 0, 0]), basis.index_of(&[0, 0, 0]))].re;
                    assert_abs_diff_eq!(e_pair, e_vac, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn collapse_prefactors() {
        let mut spec = LatticeSpec::uniform(2, mhz(5.8));
        spec.t1 = Some(vec![25.0; 2]);
        let basis = spec.site_basis().unwrap();
        let ops = collapse_operators(&spec, &[], &basis).unwrap();
        assert_eq!(ops.len(), 2); // one per site, n_th = 0
        let a0 = annihilation_op(&basis, "q0").unwrap();
        let expect = a0.scaled(Complex64::new(0.04f64.sqrt(), 0.0));
        assert_eq!(ops[0].entries(), expect.entries());

        spec.tphi = Some(vec![10.0; 2]);
        let ops = collapse_operators(&spec, &[], &basis).unwrap();
        assert_eq!(ops.len(), 4);
        let n0 = number_op(&basis, "q0").unwrap();
        let expect = n0.scaled(Complex64::new(0.2f64.sqrt(), 0.0));
        assert_eq!(ops[1].entries(), expect.entries());

        let coherent = LatticeSpec::uniform(2, mhz(5.8));
        assert!(collapse_operators(&coherent, &[], &basis).unwrap().is_empty());
    }

    #[test]
    fn sideband_rates() {
        // drain operating point quoted near 2π·2.2 MHz
        let sd = SidebandDrive {
            a_mod: mhz(115.0),
            omega_r: mhz(6229.0),
            omega_q: mhz(4550.0),
            g_bare: mhz(65.0),
            kind: BathKind::Drain,
        };
        let rate = sideband_rate(&sd).unwrap();
        // independent series evaluation of J₁(x) = (x/2) Σ (-x²/4)^k / (k!(k+1)!)
        let x: f64 = 115.0 / (6229.0 - 4550.0);
        let mut term = x / 2.0;
        let mut series = term;
        for k in 1..20 {
            term *= -(x * x) / 4.0 / (k as f64 * (k as f64 + 1.0));
            series += term;
        }
        assert_abs_diff_eq!(rate, series * mhz(65.0), epsilon = 1e-9);
        assert_abs_diff_eq!(rate / mhz(1.0), 2.22, epsilon = 0.01);

        let zero = SidebandDrive { a_mod: 0.0, ..sd };
        assert_eq!(sideband_rate(&zero).unwrap(), 0.0);

        assert!(matches!(
            sideband_rate(&SidebandDrive { omega_r: mhz(4550.0), ..sd }),
            Err(ModelError::RedSidebandDegenerate)
        ));

        // small-argument linear regime within 0.1%
        let denom = mhz(6229.0) - mhz(4550.0);
        for arg in [0.01, 0.03, 0.049] {
            let sd = SidebandDrive { a_mod: arg * denom, ..sd };
            let rate = sideband_rate(&sd).unwrap();
            let linear = sd.g_bare * sd.a_mod / (2.0 * denom);
            assert!((rate - linear).abs() / linear < 1e-3);
        }

        // monotone over the first Bessel lobe
        let mut prev = -1.0;
        for k in 0..=90 {
            let sd = SidebandDrive { a_mod: denom * 1.8 * k as f64 / 90.0, ..sd };
            let rate = sideband_rate(&sd).unwrap();
            assert!(rate > prev, "not monotone at step {k}");
            prev = rate;
        }
    }

    #[test]
    fn piecewise_linear_eval() {
        let p = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 3.0)]).unwrap();
        assert_abs_diff_eq!(p.eval(0.5), 2.0);
        assert_abs_diff_eq!(p.eval(1.5), 3.0);
        assert!(PiecewiseLinear::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = LatticeSpec::uniform(4, mhz(5.8));
        spec.thermal_population[2] = 0.6;
        assert!(matches!(spec.validate(), Err(ModelError::ThermalOutOfRange(_))));
        let mut spec = LatticeSpec::uniform(4, mhz(5.8));
        spec.t1 = Some(vec![25.0, -1.0, 25.0, 25.0]);
        assert!(matches!(spec.validate(), Err(ModelError::NonPositive { .. })));
        assert!(LatticeSpec::uniform(1, 0.0).validate().is_err());
    }
}
