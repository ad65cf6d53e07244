//! Bond current measurement: the current operator, the beamsplitter
//! protocol that maps current onto on-site density, an independent
//! spectral-projection oracle, manifold-resolved currents, and the linear
//! readout-error model.
//!
//! The beamsplitter evolves the isolated bond resonantly for
//! `t_BS = π/(4J)`, after which joint bond populations read out the current
//! statistics: `P(+J) = P(|01⟩)`, `P(0) = P(|00⟩)`, `P(−J) = P(|10⟩)`, and
//! `P(±2J) = ½ P(|11⟩)` since `|11⟩` is frozen by the hard-core constraint
//! and splits equally between the `±2J` eigenstates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::{
    evolve, DynamicsError, IntegratorConfig, QuantumState, StateData, TimeDepOperator,
};
use crate::fockspace::{
    annihilation_op, hop_op, BasisIndex, FockError, SparseOperator,
};
use crate::model::{collapse_operators, LatticeSpec, ModelError};
use crate::spectrum::ManifoldSpectrum;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("current requires two distinct sites, got ({0}, {0})")]
    DegenerateBond(usize),
    #[error("bond ({0}, {1}) is not a nearest-neighbor bond")]
    NonAdjacentBond(usize, usize),
    #[error("site {site} has dimension {dim}; the protocol requires hard-core (2-level) sites")]
    NotHardCore { site: usize, dim: usize },
    #[error("manifold spectra do not resolve the identity (defect {0:.3e})")]
    IncompleteManifolds(f64),
    #[error("assignment matrix must be square, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("assignment matrix row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("assignment matrix is singular or near-singular (condition number {0:.3e})")]
    SingularAssignment(f64),
    #[error("probability vector has length {got}, expected {want}")]
    BadProbabilityLength { got: usize, want: usize },
}

/// Probability distribution over the discrete bond current eigenvalues
/// `j ∈ {−2J, −J, 0, +J, +2J}`.
#[derive(Clone, Debug)]
pub struct CurrentStatistics {
    /// Bond sites `(l, r)`; positive current flows l → r.
    pub bond: (usize, usize),
    /// Bond tunneling rate, rad/µs.
    pub j_bond: f64,
    probs: [f64; 5],
}

impl CurrentStatistics {
    pub fn new(bond: (usize, usize), j_bond: f64, probs: [f64; 5]) -> Self {
        Self { bond, j_bond, probs }
    }

    /// Probability of the eigenvalue `m·J` for `m ∈ -2..=2`.
    pub fn prob(&self, m: i32) -> f64 {
        self.probs[(m + 2) as usize]
    }

    /// `(m, P(mJ))` pairs in ascending eigenvalue order.
    pub fn entries(&self) -> [(i32, f64); 5] {
        [-2, -1, 0, 1, 2].map(|m| (m, self.prob(m)))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `⟨j⟩ = Σ_m (mJ)·P(mJ)` in units of `J`.
    pub fn expectation_over_j(&self) -> f64 {
        self.entries().iter().map(|&(m, p)| m as f64 * p).sum()
    }

    /// `⟨j⟩` in rad/µs.
    pub fn expectation(&self) -> f64 {
        self.j_bond * self.expectation_over_j()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV export with columns `bond_l,bond_r,j_over_J,probability`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bond_l,bond_r,j_over_J,probability")?;
        for (m, p) in self.entries() {
            writeln!(w, "{},{},{},{:.16e}", self.bond.0, self.bond.1, m, p)?;
        }
        Ok(())
    }
}

/// Bond current operator `ĵ_{l→r} = iJ (a_l† a_r − a_r† a_l)`; Hermitian
/// and traceless.
pub fn current_operator(
    basis: &BasisIndex,
    l: usize,
    r: usize,
    j_bond: f64,
) -> Result<SparseOperator, MeasurementError> {
    if l == r {
        return Err(MeasurementError::DegenerateBond(l));
    }
    let hop_lr = hop_op(basis, &LatticeSpec::site_label(l), &LatticeSpec::site_label(r))?;
    let ij = Complex64::new(0.0, j_bond);
    Ok(hop_lr.scaled(ij).add(&hop_lr.dagger().scaled(-ij))?)
}

/// How the bond is isolated from the rest of the lattice during the
/// beamsplitter evolution.
#[derive(Clone, Copy, Debug)]
pub enum Isolation {
    /// Tunneling to spectator sites is removed: the exact protocol map.
    Ideal,
    /// Spectator sites are detuned by the given offset (alternating sign),
    /// tunneling left in place; quantifies the protocol error.
    FiniteDetuning(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct ProtocolOptions {
    pub with_decoherence: bool,
    pub isolation: Isolation,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self { with_decoherence: false, isolation: Isolation::Ideal }
    }
}

fn check_hardcore_bond(
    basis: &BasisIndex,
    bond: (usize, usize),
) -> Result<(usize, usize), MeasurementError> {
    let (l, r) = bond;
    if l == r {
        return Err(MeasurementError::DegenerateBond(l));
    }
    let mut positions = (0, 0);
    for (site, out) in [(l, &mut positions.0), (r, &mut positions.1)] {
        let pos = basis.position(&LatticeSpec::site_label(site))?;
        let dim = basis.mode(pos).dim;
        if dim != 2 {
            return Err(MeasurementError::NotHardCore { site, dim });
        }
        *out = pos;
    }
    Ok(positions)
}

/// Measure current statistics by replaying the beamsplitter protocol:
/// isolate the bond, evolve resonantly for `t_BS = π/(4J)`, and read the
/// joint bond populations.
pub fn beamsplitter_protocol(
    state: &QuantumState,
    bond: (usize, usize),
    spec: &LatticeSpec,
    opts: &ProtocolOptions,
) -> Result<CurrentStatistics, MeasurementError> {
    let (l, r) = bond;
    if l.abs_diff(r) != 1 {
        return Err(MeasurementError::NonAdjacentBond(l, r));
    }
    let basis = &state.basis;
    let (pos_l, pos_r) = check_hardcore_bond(basis, bond)?;
    let j_bond = spec.tunneling[l.min(r)];
    let t_bs = std::f64::consts::FRAC_PI_4 / j_bond;

    let h_iso = match opts.isolation {
        Isolation::Ideal => {
            // only the measured bond tunnels; bond sites on resonance
            let hop = hop_op(
                basis,
                &LatticeSpec::site_label(l),
                &LatticeSpec::site_label(r),
            )?;
            let c = Complex64::new(j_bond, 0.0);
            hop.scaled(c).add(&hop.dagger().scaled(c))?
        }
        Isolation::FiniteDetuning(offset) => {
            let mut detuned = spec.clone();
            let mut sign = 1.0;
            for i in 0..spec.n_sites {
                if i == l || i == r {
                    detuned.on_site[i] = 0.0;
                } else {
                    detuned.on_site[i] = sign * offset;
                    sign = -sign;
                }
            }
            crate::model::bose_hubbard_hamiltonian(&detuned, basis)?
        }
    };

    let evolved = if opts.with_decoherence {
        let collapse = collapse_operators(spec, &[], basis)?;
        let cfg = IntegratorConfig { store_states: true, ..Default::default() };
        let traj = evolve(
            state,
            &TimeDepOperator::constant(h_iso),
            &collapse,
            (0.0, t_bs),
            &[t_bs],
            &[],
            &cfg,
        )?;
        traj.states.expect("states stored")[0].clone()
    } else {
        // the isolation Hamiltonian is static: propagate exactly
        let eig = h_iso.to_dense().symmetric_eigen();
        let phases = DVector::from_fn(basis.total_dim(), |k, _| {
            Complex64::from_polar(1.0, -eig.eigenvalues[k] * t_bs)
        });
        let u = &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
        let data = match &state.data {
            StateData::Ket(v) => StateData::Ket(&u * v),
            StateData::Density(m) => StateData::Density(&u * m * u.adjoint()),
        };
        QuantumState { basis: basis.clone(), data }
    };

    let joint = evolved.partial_trace(&[pos_l, pos_r]);
    // local order |n_l n_r⟩: 00, 01, 10, 11
    let p00 = joint[(0, 0)].re;
    let p01 = joint[(1, 1)].re;
    let p10 = joint[(2, 2)].re;
    let p11 = joint[(3, 3)].re;
    Ok(CurrentStatistics::new(
        bond,
        j_bond,
        [0.5 * p11, p10, p00, p01, 0.5 * p11],
    ))
}

/// Independent oracle: project the reduced bond state directly onto the
/// eigenbasis of `ĵ` restricted to the hard-core two-site space.
pub fn oracle_current_statistics(
    state: &QuantumState,
    bond: (usize, usize),
    j_bond: f64,
) -> Result<CurrentStatistics, MeasurementError> {
    let (pos_l, pos_r) = check_hardcore_bond(&state.basis, bond)?;
    let rho = state.partial_trace(&[pos_l, pos_r]);
    let sqrt_half = std::f64::consts::FRAC_1_SQRT_2;
    // |±J⟩ = (|10⟩ ∓ i|01⟩)/√2 in the local |n_l n_r⟩ order 00,01,10,11
    let v_plus = DVector::from_vec(vec![
        Complex64::ZERO,
        Complex64::new(0.0, -sqrt_half),
        Complex64::new(sqrt_half, 0.0),
        Complex64::ZERO,
    ]);
    let v_minus = DVector::from_vec(vec![
        Complex64::ZERO,
        Complex64::new(0.0, sqrt_half),
        Complex64::new(sqrt_half, 0.0),
        Complex64::ZERO,
    ]);
    let project = |v: &DVector<Complex64>| (v.adjoint() * &rho * v)[(0, 0)].re;
    let p_plus = project(&v_plus);
    let p_minus = project(&v_minus);
    let p_zero = rho[(0, 0)].re;
    let p_double = rho[(3, 3)].re;
    Ok(CurrentStatistics::new(
        bond,
        j_bond,
        [0.5 * p_double, p_minus, p_zero, p_plus, 0.5 * p_double],
    ))
}

/// Bond current split into independent particle-number-manifold
/// contributions: `⟨ĵ_N⟩ = Σ_k ⟨ψ_{N,k}| ρ ĵ |ψ_{N,k}⟩`. The spectra live
/// on the site-only basis; resonator factors of the state, when present,
/// are traced through automatically.
pub fn manifold_current(
    state: &QuantumState,
    bond: (usize, usize),
    j_bond: f64,
    spectra: &[ManifoldSpectrum],
) -> Result<Vec<(usize, f64)>, MeasurementError> {
    let basis = &state.basis;
    let dim = basis.total_dim();
    let site_dim: usize = basis.site_positions().iter().map(|&p| basis.mode(p).dim).product();
    let res_dim = dim / site_dim;

    // the manifold projectors must resolve the identity on the site space
    let mut gram = DMatrix::<Complex64>::zeros(site_dim, site_dim);
    for m in spectra {
        for v in &m.states {
            if v.len() != site_dim {
                return Err(MeasurementError::BadProbabilityLength {
                    got: v.len(),
                    want: site_dim,
                });
            }
            gram += v * v.adjoint();
        }
    }
    let defect = (&gram - DMatrix::identity(site_dim, site_dim)).norm();
    if defect > 1e-9 * site_dim as f64 {
        return Err(MeasurementError::IncompleteManifolds(defect));
    }

    let j_op = current_operator(basis, bond.0, bond.1, j_bond)?;
    let rho = match state.to_density().data {
        StateData::Density(m) => m,
        _ => unreachable!(),
    };
    // X = ρ ĵ, accumulated column-by-column from the sparse entries
    let mut x = DMatrix::<Complex64>::zeros(dim, dim);
    for &(k, c, v) in j_op.entries() {
        let (k, c) = (k as usize, c as usize);
        for row in 0..dim {
            x[(row, c)] += rho[(row, k)] * v;
        }
    }

    let mut out = Vec::with_capacity(spectra.len());
    for m in spectra {
        let mut acc = Complex64::ZERO;
        for psi in &m.states {
            for r in 0..res_dim {
                for a in 0..site_dim {
                    if psi[a] == Complex64::ZERO {
                        continue;
                    }
                    for b in 0..site_dim {
                        if psi[b] == Complex64::ZERO {
                            continue;
                        }
                        acc += psi[a].conj() * x[(a * res_dim + r, b * res_dim + r)] * psi[b];
                    }
                }
            }
        }
        out.push((m.n_particles, acc.re));
    }
    Ok(out)
}

/// Row-stochastic map from true multi-qubit states to assigned readout
/// outcomes, with an optional thermal-preparation correction for the
/// calibration states.
#[derive(Clone, Debug)]
pub struct AssignmentModel {
    assignment: DMatrix<f64>,
    condition_number: f64,
}

impl AssignmentModel {
    pub fn identity(n_outcomes: usize) -> Self {
        Self { assignment: DMatrix::identity(n_outcomes, n_outcomes), condition_number: 1.0 }
    }

    /// Validate row-stochasticity and invertibility. The condition number
    /// is reported through [`Self::condition_number`].
    pub fn new(assignment: DMatrix<f64>) -> Result<Self, MeasurementError> {
        if assignment.nrows() != assignment.ncols() {
            return Err(MeasurementError::NotSquare {
                rows: assignment.nrows(),
                cols: assignment.ncols(),
            });
        }
        for row in 0..assignment.nrows() {
            let sum: f64 = assignment.row(row).iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MeasurementError::NotStochastic { row, sum });
            }
        }
        let svd = assignment.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !cond.is_finite() || cond > 1e12 {
            return Err(MeasurementError::SingularAssignment(cond));
        }
        Ok(Self { assignment, condition_number: cond })
    }

    /// Recover the bare-Fock-basis assignment matrix from calibration data
    /// taken with thermally occupied preparation states. `thermal_prep[i]`
    /// is the residual excited population of site `i` during calibration;
    /// the prepared-label → true-Fock map is the tensor product of
    /// per-site `[[1−n, n], [n, 1−n]]` factors.
    pub fn from_thermal_calibration(
        measured: DMatrix<f64>,
        thermal_prep: &[f64],
    ) -> Result<Self, MeasurementError> {
        let n = measured.nrows();
        let expect = 1usize << thermal_prep.len();
        if n != expect || measured.ncols() != n {
            return Err(MeasurementError::NotSquare { rows: measured.nrows(), cols: measured.ncols() });
        }
        let mut prep = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut p = 1.0;
                for (s, &nth) in thermal_prep.iter().enumerate() {
                    let bit_i = (i >> (thermal_prep.len() - 1 - s)) & 1;
                    let bit_j = (j >> (thermal_prep.len() - 1 - s)) & 1;
                    p *= if bit_i == bit_j { 1.0 - nth } else { nth };
                }
                prep[(i, j)] = p;
            }
        }
        let prep_inv = prep
            .try_inverse()
            .ok_or(MeasurementError::SingularAssignment(f64::INFINITY))?;
        Self::new(prep_inv * measured)
    }

    pub fn n_outcomes(&self) -> usize {
        self.assignment.nrows()
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Forward model: assigned probabilities from true-state probabilities.
    pub fn apply(&self, true_probs: &[f64]) -> Result<Vec<f64>, MeasurementError> {
        let n = self.n_outcomes();
        if true_probs.len() != n {
            return Err(MeasurementError::BadProbabilityLength { got: true_probs.len(), want: n });
        }
        let p = DVector::from_column_slice(true_probs);
        Ok((self.assignment.transpose() * p).iter().copied().collect())
    }

    /// Invert the readout model; negative components are clamped to zero
    /// and the vector renormalized. Returns the corrected probabilities and
    /// the total clamped (negative) mass.
    pub fn invert(&self, assigned: &[f64]) -> Result<(Vec<f64>, f64), MeasurementError> {
        let n = self.n_outcomes();
        if assigned.len() != n {
            return Err(MeasurementError::BadProbabilityLength { got: assigned.len(), want: n });
        }
        let at = self.assignment.transpose();
        let lu = at.lu();
        let p = DVector::from_column_slice(assigned);
        let raw = lu
            .solve(&p)
            .ok_or(MeasurementError::SingularAssignment(self.condition_number))?;
        let clamped_mass: f64 = raw.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
        let mut out: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            for v in &mut out {
                *v /= total;
            }
        }
        Ok((out, clamped_mass))
    }

    /// Inversion without clamping; exact linear inverse of [`Self::apply`].
    pub fn invert_unclamped(&self, assigned: &[f64]) -> Result<Vec<f64>, MeasurementError> {
        let n = self.n_outcomes();
        if assigned.len() != n {
            return Err(MeasurementError::BadProbabilityLength { got: assigned.len(), want: n });
        }
        let at = self.assignment.transpose();
        let p = DVector::from_column_slice(assigned);
        at.lu()
            .solve(&p)
            .map(|v| v.iter().copied().collect())
            .ok_or(MeasurementError::SingularAssignment(self.condition_number))
    }
}

/// Expectation of the spin-form current on a hard-core bond,
/// `2J (⟨S_l^x S_r^y⟩ − ⟨S_l^y S_r^x⟩)` with spin-½ operators; equals the
/// ladder form identically and is used as an algebraic cross-check.
pub fn spin_form_current_expectation(
    state: &QuantumState,
    bond: (usize, usize),
    j_bond: f64,
) -> Result<f64, MeasurementError> {
    let basis = &state.basis;
    check_hardcore_bond(basis, bond)?;
    // spin-½ operators in the convention a = S⁻ = Sx − iSy
    let spin = |site: usize, axis: char| -> Result<SparseOperator, MeasurementError> {
        let a = annihilation_op(basis, &LatticeSpec::site_label(site))?;
        let op = match axis {
            'x' => a.add(&a.dagger())?.scaled(Complex64::new(0.5, 0.0)),
            _ => a.dagger().sub(&a)?.scaled(Complex64::new(0.0, -0.5)),
        };
        Ok(op)
    };
    let (l, r) = bond;
    let term1 = spin(l, 'x')?.mul(&spin(r, 'y')?)?;
    let term2 = spin(l, 'y')?.mul(&spin(r, 'x')?)?;
    let op = term1.sub(&term2)?.scaled(Complex64::new(2.0 * j_bond, 0.0));
    Ok(state.expectation(&op).re)
}
