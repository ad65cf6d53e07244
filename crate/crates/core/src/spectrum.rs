//! Particle-number-manifold diagonalization, driven many-body spectra, and
//! the transition-frequency markers used to interpret transport peaks.
//!
//! Everything here is dense Hermitian diagonalization; the state spaces stay
//! at desk scale (≤ 64 dimensions).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::fockspace::{total_number_op, BasisIndex, FockError, SparseOperator};
use crate::model::{
    bose_hubbard_hamiltonian, drive_coupling_op, LatticeSpec, ModelError,
};
use crate::units::to_mhz;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Hamiltonian does not commute with the particle number (commutator norm {0:.3e})")]
    NotNumberConserving(f64),
    #[error("no basis states with particle number {0}")]
    EmptyManifold(usize),
    #[error("empty detuning grid")]
    EmptyGrid,
    #[error("branch index {index} out of range for {levels} levels")]
    BadBranch { index: usize, levels: usize },
    #[error("branch tracking lost at detuning {detuning}: best overlap {overlap:.3}")]
    TrackingFailure { detuning: f64, overlap: f64 },
    #[error("branch tracking ambiguous at detuning {detuning}: two levels degenerate within {gap:.3e}")]
    AmbiguousTracking { detuning: f64, gap: f64 },
}

/// Eigenpairs of a number-conserving Hamiltonian restricted to one particle
/// number manifold. Eigenvectors live in the full basis with support only
/// on the manifold.
#[derive(Clone, Debug)]
pub struct ManifoldSpectrum {
    pub n_particles: usize,
    /// Ascending eigenvalues, rad/µs.
    pub energies: Vec<f64>,
    pub states: Vec<DVector<Complex64>>,
}

impl ManifoldSpectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Orthonormalize the columns spanning a (near-)degenerate cluster of a real
/// symmetric matrix into real vectors. The real/imaginary parts of the
/// complex eigenvectors span the same invariant subspace.
fn realify_cluster(vectors: &mut [DVector<Complex64>]) {
    let want = vectors.len();
    let dim = vectors[0].len();
    let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(2 * want);
    for v in vectors.iter() {
        candidates.push(v.map(|z| z.re));
        candidates.push(v.map(|z| z.im));
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(want);
    for mut c in candidates {
        for b in &basis {
            let proj = b.dot(&c);
            c -= b * proj;
        }
        let n = c.norm();
        if n > 1e-8 {
            basis.push(c / n);
            if basis.len() == want {
                break;
            }
        }
    }
    if basis.len() == want {
        for (v, b) in vectors.iter_mut().zip(basis) {
            *v = DVector::from_fn(dim, |i, _| Complex64::new(b[i], 0.0));
        }
    }
}

/// Eigenpairs of `h` restricted to the block with total site occupation `n`.
///
/// Errors if `h` fails to commute with the total particle number. For real
/// Hamiltonians the returned eigenvectors are rotated to real form, which
/// in particular makes every eigenstate carry zero bond current.
pub fn manifold_eigenstates(
    h: &SparseOperator,
    basis: &BasisIndex,
    n: usize,
) -> Result<ManifoldSpectrum, SpectrumError> {
    let n_op = total_number_op(basis)?;
    let comm = n_op.commutator(h)?;
    let scale = h.max_abs().max(1.0);
    if comm.max_abs() > 1e-9 * scale {
        return Err(SpectrumError::NotNumberConserving(comm.max_abs()));
    }
    let idx: Vec<usize> =
        (0..basis.total_dim()).filter(|&s| basis.site_occupation_total(s) == n).collect();
    if idx.is_empty() {
        return Err(SpectrumError::EmptyManifold(n));
    }
    let dense = h.to_dense();
    let block = DMatrix::from_fn(idx.len(), idx.len(), |r, c| dense[(idx[r], idx[c])]);
    let is_real = block.iter().all(|z| z.im == 0.0);
    let eig = block.symmetric_eigen();

    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut block_states: Vec<DVector<Complex64>> =
        order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();

    if is_real {
        let tol = 1e-9 * scale;
        let mut lo = 0;
        while lo < energies.len() {
            let mut hi = lo + 1;
            while hi < energies.len() && energies[hi] - energies[hi - 1] < tol {
                hi += 1;
            }
            realify_cluster(&mut block_states[lo..hi]);
            lo = hi;
        }
    }

    let states = block_states
        .into_iter()
        .map(|v| {
            let mut full = DVector::zeros(basis.total_dim());
            for (k, &i) in idx.iter().enumerate() {
                full[i] = v[k];
            }
            full
        })
        .collect();
    Ok(ManifoldSpectrum { n_particles: n, energies, states })
}

/// All manifold spectra of a number-conserving Hamiltonian, N ascending.
pub fn all_manifolds(
    h: &SparseOperator,
    basis: &BasisIndex,
) -> Result<Vec<ManifoldSpectrum>, SpectrumError> {
    let n_max: usize = basis
        .site_positions()
        .iter()
        .map(|&p| basis.mode(p).dim - 1)
        .sum();
    (0..=n_max).map(|n| manifold_eigenstates(h, basis, n)).collect()
}

/// Dressed many-body levels of the driven lattice on a detuning grid at
/// fixed Rabi amplitude.
#[derive(Clone, Debug)]
pub struct DrivenSpectrum {
    /// Detuning grid, rad/µs.
    pub detunings: Vec<f64>,
    /// `levels[g]` are the sorted eigenvalues at `detunings[g]`.
    pub levels: Vec<Vec<f64>>,
    /// Eigenvector matrices, columns matching `levels`.
    pub states: Vec<DMatrix<Complex64>>,
}

/// Diagonalize `H_BH + Ω D(φ) − Δ N̂` at every grid detuning.
pub fn driven_spectrum(
    spec: &LatticeSpec,
    omega: f64,
    phases: &[f64],
    detuning_grid: &[f64],
    basis: &BasisIndex,
) -> Result<DrivenSpectrum, SpectrumError> {
    if detuning_grid.is_empty() {
        return Err(SpectrumError::EmptyGrid);
    }
    let h_bh = bose_hubbard_hamiltonian(spec, basis)?;
    let coupling = drive_coupling_op(phases, basis)?;
    let n_op = total_number_op(basis)?;
    let h0 = h_bh.add(&coupling.scaled(Complex64::new(omega, 0.0)))?;

    let mut levels = Vec::with_capacity(detuning_grid.len());
    let mut states = Vec::with_capacity(detuning_grid.len());
    for &delta in detuning_grid {
        let h = h0.add(&n_op.scaled(Complex64::new(-delta, 0.0)))?;
        let eig = h.to_dense().symmetric_eigen();
        let dim = basis.total_dim();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        levels.push(order.iter().map(|&k| eig.eigenvalues[k]).collect());
        let mut m = DMatrix::zeros(dim, dim);
        for (col, &k) in order.iter().enumerate() {
            m.set_column(col, &eig.eigenvectors.column(k));
        }
        states.push(m);
    }
    Ok(DrivenSpectrum { detunings: detuning_grid.to_vec(), levels, states })
}

impl DrivenSpectrum {
    /// Follow one branch across the grid by maximum-overlap continuation.
    ///
    /// Starts from the level with index `start` (in energy order) at the
    /// first grid point. Fails if successive overlaps drop below 0.9 (the
    /// grid is too coarse) and reports, rather than guesses, when two
    /// candidate levels are degenerate within 1e-9 of the local scale.
    pub fn track_branch(&self, start: usize) -> Result<Vec<usize>, SpectrumError> {
        let dim = self.levels[0].len();
        if start >= dim {
            return Err(SpectrumError::BadBranch { index: start, levels: dim });
        }
        let mut path = Vec::with_capacity(self.detunings.len());
        path.push(start);
        let mut current = self.states[0].column(start).into_owned();
        for g in 1..self.detunings.len() {
            let overlaps: Vec<f64> = (0..dim)
                .map(|k| {
                    let u = self.states[g].column(k);
                    current.dotc(&u).norm()
                })
                .collect();
            let best = (0..dim)
                .max_by(|&a, &b| overlaps[a].partial_cmp(&overlaps[b]).unwrap())
                .unwrap();
            if overlaps[best] < 0.9 {
                return Err(SpectrumError::TrackingFailure {
                    detuning: self.detunings[g],
                    overlap: overlaps[best],
                });
            }
            let scale = self.levels[g].iter().fold(1.0f64, |m, &e| m.max(e.abs()));
            for k in 0..dim {
                if k != best
                    && (overlaps[k] - overlaps[best]).abs() < 1e-6
                    && (self.levels[g][k] - self.levels[g][best]).abs() < 1e-9 * scale
                {
                    return Err(SpectrumError::AmbiguousTracking {
                        detuning: self.detunings[g],
                        gap: (self.levels[g][k] - self.levels[g][best]).abs(),
                    });
                }
            }
            path.push(best);
            current = self.states[g].column(best).into_owned();
        }
        Ok(path)
    }

    /// Minimum distance from the tracked branch to any other level, per
    /// grid point.
    pub fn gap_profile(&self, branch: &[usize]) -> Result<Vec<f64>, SpectrumError> {
        let dim = self.levels[0].len();
        branch
            .iter()
            .zip(&self.levels)
            .map(|(&b, lv)| {
                if b >= dim {
                    return Err(SpectrumError::BadBranch { index: b, levels: dim });
                }
                Ok(lv
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != b)
                    .map(|(_, &e)| (e - lv[b]).abs())
                    .fold(f64::INFINITY, f64::min))
            })
            .collect()
    }
}

/// Instantaneous gap along a tracked branch of a driven spectrum.
pub fn many_body_gap(ds: &DrivenSpectrum, branch: &[usize]) -> Result<Vec<f64>, SpectrumError> {
    ds.gap_profile(branch)
}

/// Transition-frequency markers for transport interpretation: the
/// single-particle lines `E_{1,k} − E_0` and the half-energy two-particle
/// lines `(E_{2,k} − E_0)/2`, both in rad/µs relative to the lattice frame.
#[derive(Clone, Debug)]
pub struct TransitionMarkers {
    pub single_particle: Vec<f64>,
    pub two_particle: Vec<f64>,
}

pub fn transition_frequencies(
    spec: &LatticeSpec,
    basis: &BasisIndex,
) -> Result<TransitionMarkers, SpectrumError> {
    let h = bose_hubbard_hamiltonian(spec, basis)?;
    let e0 = manifold_eigenstates(&h, basis, 0)?.energies[0];
    let one = manifold_eigenstates(&h, basis, 1)?;
    let two = manifold_eigenstates(&h, basis, 2)?;
    Ok(TransitionMarkers {
        single_particle: one.energies.iter().map(|e| e - e0).collect(),
        two_particle: two.energies.iter().map(|e| (e - e0) / 2.0).collect(),
    })
}

impl TransitionMarkers {
    /// CSV export with columns `kind,N,k,frequency_MHz`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,N,k,frequency_MHz")?;
        for (k, f) in self.single_particle.iter().enumerate() {
            writeln!(w, "single_particle,1,{},{:.16e}", k + 1, to_mhz(*f))?;
        }
        for (k, f) in self.two_particle.iter().enumerate() {
            writeln!(w, "two_particle,2,{},{:.16e}", k + 1, to_mhz(*f))?;
        }
        Ok(())
    }
}
