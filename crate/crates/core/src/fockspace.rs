//! Composite Fock bases and sparse operators for lattice sites and bath
//! resonators.
//!
//! A basis is an ordered list of modes; flat indices are row-major over the
//! mode list in declaration order (the first mode has the largest stride),
//! with site modes declared before resonator modes. Sparse operators are
//! stored as canonical triplets: row-major sorted, duplicates summed, exact
//! zeros dropped, so entrywise comparison is deterministic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("basis requires at least one mode")]
    EmptyModeList,
    #[error("mode `{label}` has local dimension {dim}; minimum is 2")]
    DimTooSmall { label: String, dim: usize },
    #[error("duplicate mode label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown mode label `{0}`")]
    UnknownMode(String),
    #[error("basis has no site modes")]
    NoSiteModes,
    #[error("operator dimension {left} does not match {right}")]
    DimMismatch { left: usize, right: usize },
}

/// What a mode physically is. Site modes carry lattice particles; resonator
/// modes belong to engineered baths and are excluded from the lattice
/// particle number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Site,
    Resonator,
}

/// One mode of the composite basis: a lattice site or a bath resonator with
/// a truncated local Hilbert space. `dim = 2` is a hard-core site.
#[derive(Clone, Debug)]
pub struct ModeSpec {
    pub label: String,
    pub dim: usize,
    pub kind: ModeKind,
}

impl ModeSpec {
    pub fn site(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim, kind: ModeKind::Site }
    }

    /// A hard-core (two-level) lattice site.
    pub fn hardcore_site(label: impl Into<String>) -> Self {
        Self::site(label, 2)
    }

    pub fn resonator(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim, kind: ModeKind::Resonator }
    }
}

/// Index map between occupation tuples and flat basis indices.
///
/// The bijection is row-major over the mode list: the flat index of an
/// occupation tuple `(n_0, .., n_{M-1})` is `Σ n_m · stride_m` with
/// `stride_{M-1} = 1`.
#[derive(Clone, Debug)]
pub struct BasisIndex {
    modes: Vec<ModeSpec>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl BasisIndex {
    pub fn new(modes: Vec<ModeSpec>) -> Result<Self, FockError> {
        if modes.is_empty() {
            return Err(FockError::EmptyModeList);
        }
        for m in &modes {
            if m.dim < 2 {
                return Err(FockError::DimTooSmall { label: m.label.clone(), dim: m.dim });
            }
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.label == m.label) {
                return Err(FockError::DuplicateLabel(m.label.clone()));
            }
        }
        let mut strides = vec![1usize; modes.len()];
        for m in (0..modes.len().saturating_sub(1)).rev() {
            strides[m] = strides[m + 1] * modes[m + 1].dim;
        }
        let total_dim = strides[0] * modes[0].dim;
        Ok(Self { modes, strides, total_dim })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn mode(&self, pos: usize) -> &ModeSpec {
        &self.modes[pos]
    }

    pub fn stride(&self, pos: usize) -> usize {
        self.strides[pos]
    }

    /// Position of a mode in declaration order.
    pub fn position(&self, label: &str) -> Result<usize, FockError> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| FockError::UnknownMode(label.to_string()))
    }

    /// Occupation of one mode in the basis state with the given flat index.
    pub fn occupation_of(&self, index: usize, pos: usize) -> usize {
        (index / self.strides[pos]) % self.modes[pos].dim
    }

    /// Full occupation tuple of a flat index.
    pub fn occupations(&self, index: usize) -> Vec<usize> {
        (0..self.modes.len()).map(|m| self.occupation_of(index, m)).collect()
    }

    /// Flat index of an occupation tuple.
    pub fn index_of(&self, occ: &[usize]) -> usize {
        debug_assert_eq!(occ.len(), self.modes.len());
        occ.iter().zip(&self.strides).map(|(n, s)| n * s).sum()
    }

    /// Positions of the site modes, in declaration order.
    pub fn site_positions(&self) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == ModeKind::Site)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_sites(&self) -> usize {
        self.modes.iter().filter(|m| m.kind == ModeKind::Site).count()
    }

    /// Total lattice particle number of a basis state (site modes only).
    pub fn site_occupation_total(&self, index: usize) -> usize {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == ModeKind::Site)
            .map(|(p, _)| self.occupation_of(index, p))
            .sum()
    }
}

/// Complex sparse operator in canonical triplet form.
///
/// Entries are row-major sorted with duplicates summed and exact zeros
/// removed, so two operators are entrywise equal iff their entry lists are
/// equal.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    entries: Vec<(u32, u32, Complex64)>,
    hermitian_hint: bool,
}

impl SparseOperator {
    /// Build from triplets; duplicate `(row, col)` pairs are summed.
    pub fn from_triplets(
        dim: usize,
        triplets: Vec<(u32, u32, Complex64)>,
        hermitian_hint: bool,
    ) -> Self {
        let mut entries = triplets;
        entries.retain(|&(r, c, _)| (r as usize) < dim && (c as usize) < dim);
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut canon: Vec<(u32, u32, Complex64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match canon.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => canon.push((r, c, v)),
            }
        }
        canon.retain(|&(_, _, v)| v != Complex64::ZERO);
        Self { dim, entries: canon, hermitian_hint }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, entries: Vec::new(), hermitian_hint: true }
    }

    pub fn identity(dim: usize) -> Self {
        let entries = (0..dim as u32).map(|i| (i, i, Complex64::ONE)).collect();
        Self { dim, entries, hermitian_hint: true }
    }

    /// Diagonal operator from real values; zero values are dropped.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let entries = diag
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, i as u32, Complex64::new(v, 0.0)))
            .collect();
        Self { dim: diag.len(), entries, hermitian_hint: true }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, u32, Complex64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let entries = self.entries.iter().map(|&(r, k, v)| (r, k, c * v)).collect();
        Self::from_triplets(self.dim, entries, self.hermitian_hint && c.im == 0.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self, FockError> {
        self.check_dim(other)?;
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Ok(Self::from_triplets(
            self.dim,
            entries,
            self.hermitian_hint && other.hermitian_hint,
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FockError> {
        self.add(&other.scaled(-Complex64::ONE))
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let entries = self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.dim, entries, self.hermitian_hint)
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self, FockError> {
        self.check_dim(other)?;
        // canonical order makes rows of `other` contiguous
        let row_ranges = other.row_ranges();
        let mut triplets = Vec::new();
        for &(r, k, v) in &self.entries {
            let (lo, hi) = row_ranges[k as usize];
            for &(_, c, w) in &other.entries[lo..hi] {
                triplets.push((r, c, v * w));
            }
        }
        Ok(Self::from_triplets(self.dim, triplets, false))
    }

    pub fn commutator(&self, other: &Self) -> Result<Self, FockError> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    fn row_ranges(&self) -> Vec<(usize, usize)> {
        let mut ranges = vec![(0usize, 0usize); self.dim];
        let mut i = 0;
        while i < self.entries.len() {
            let r = self.entries[i].0 as usize;
            let start = i;
            while i < self.entries.len() && self.entries[i].0 as usize == r {
                i += 1;
            }
            ranges[r] = (start, i);
        }
        ranges
    }

    fn check_dim(&self, other: &Self) -> Result<(), FockError> {
        if self.dim != other.dim {
            return Err(FockError::DimMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r as usize, c as usize)] += v;
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.iter().filter(|&&(r, c, _)| r == c).map(|&(_, _, v)| v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, _, v)| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|&(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute row sum; upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        let mut sums = vec![0.0f64; self.dim];
        for &(r, _, v) in &self.entries {
            sums[r as usize] += v.norm();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Entrywise distance to the conjugate transpose.
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.dagger()).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
    }

    pub fn apply(&self, x: &DVector<Complex64>) -> Result<DVector<Complex64>, FockError> {
        if x.len() != self.dim {
            return Err(FockError::DimMismatch { left: self.dim, right: x.len() });
        }
        let mut y = DVector::zeros(self.dim);
        for &(r, c, v) in &self.entries {
            y[r as usize] += v * x[c as usize];
        }
        Ok(y)
    }

    /// `Tr(self · rho)` for a dense matrix, without forming the product.
    pub fn trace_product(&self, rho: &DMatrix<Complex64>) -> Complex64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| v * rho[(c as usize, r as usize)])
            .sum()
    }

    /// `⟨x|self|x⟩`.
    pub fn expectation_ket(&self, x: &DVector<Complex64>) -> Complex64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| x[r as usize].conj() * v * x[c as usize])
            .sum()
    }
}

/// Compressed-row form for repeated application inside integrators.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn from_sparse(op: &SparseOperator) -> Self {
        let dim = op.dim();
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in op.entries() {
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col = op.entries().iter().map(|&(_, c, _)| c).collect();
        let val = op.entries().iter().map(|&(_, _, v)| v).collect();
        Self { dim, row_ptr, col, val }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `y += alpha · A x` on flat slices.
    pub fn acc_mul_vec(&self, alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
        for r in 0..self.dim {
            let mut acc = Complex64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[r] += alpha * acc;
        }
    }

    /// `out += alpha · A ρ` for column-major `ρ`, `out` of size `dim × dim`.
    pub fn acc_mul_left(&self, alpha: Complex64, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for cidx in 0..n {
            let rho_col = &rho[cidx * n..(cidx + 1) * n];
            let out_col = &mut out[cidx * n..(cidx + 1) * n];
            for r in 0..n {
                let mut acc = Complex64::ZERO;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.val[k] * rho_col[self.col[k] as usize];
                }
                out_col[r] += alpha * acc;
            }
        }
    }

    /// `out += alpha · ρ A` for column-major `ρ`, `out`.
    pub fn acc_mul_right(&self, alpha: Complex64, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for r in 0..n {
            let rho_col = &rho[r * n..(r + 1) * n];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col[k] as usize;
                let w = alpha * self.val[k];
                let out_col = &mut out[c * n..(c + 1) * n];
                for (o, x) in out_col.iter_mut().zip(rho_col) {
                    *o += w * x;
                }
            }
        }
    }

    /// `out += alpha · ρ A†` for column-major `ρ`, `out`.
    pub fn acc_mul_right_dagger(
        &self,
        alpha: Complex64,
        rho: &[Complex64],
        out: &mut [Complex64],
    ) {
        let n = self.dim;
        for r in 0..n {
            let out_col_start = r * n;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col[k] as usize;
                let w = alpha * self.val[k].conj();
                let rho_col = &rho[c * n..(c + 1) * n];
                let out_col = &mut out[out_col_start..out_col_start + n];
                for (o, x) in out_col.iter_mut().zip(rho_col) {
                    *o += w * x;
                }
            }
        }
    }
}

/// Annihilation operator for one mode: `⟨.., n-1, ..|a|.., n, ..⟩ = √n`
/// within the mode's truncation.
pub fn annihilation_op(basis: &BasisIndex, mode: &str) -> Result<SparseOperator, FockError> {
    let pos = basis.position(mode)?;
    let stride = basis.stride(pos);
    let mut triplets = Vec::new();
    for s in 0..basis.total_dim() {
        let n = basis.occupation_of(s, pos);
        if n >= 1 {
            let t = s - stride;
            triplets.push((t as u32, s as u32, Complex64::new((n as f64).sqrt(), 0.0)));
        }
    }
    Ok(SparseOperator::from_triplets(basis.total_dim(), triplets, false))
}

/// Creation operator for one mode.
pub fn creation_op(basis: &BasisIndex, mode: &str) -> Result<SparseOperator, FockError> {
    Ok(annihilation_op(basis, mode)?.dagger())
}

/// Number operator of one mode: diagonal with that mode's occupation.
pub fn number_op(basis: &BasisIndex, mode: &str) -> Result<SparseOperator, FockError> {
    let pos = basis.position(mode)?;
    let mut triplets = Vec::new();
    for s in 0..basis.total_dim() {
        let n = basis.occupation_of(s, pos);
        if n > 0 {
            triplets.push((s as u32, s as u32, Complex64::new(n as f64, 0.0)));
        }
    }
    Ok(SparseOperator::from_triplets(basis.total_dim(), triplets, true))
}

/// Total lattice particle number: sum of number operators over site modes
/// only, acting trivially on resonator factors.
pub fn total_number_op(basis: &BasisIndex) -> Result<SparseOperator, FockError> {
    if basis.n_sites() == 0 {
        return Err(FockError::NoSiteModes);
    }
    let mut triplets = Vec::new();
    for s in 0..basis.total_dim() {
        let n = basis.site_occupation_total(s);
        if n > 0 {
            triplets.push((s as u32, s as u32, Complex64::new(n as f64, 0.0)));
        }
    }
    Ok(SparseOperator::from_triplets(basis.total_dim(), triplets, true))
}

/// Hopping operator `a_to† a_from` between two distinct modes.
pub fn hop_op(
    basis: &BasisIndex,
    to_mode: &str,
    from_mode: &str,
) -> Result<SparseOperator, FockError> {
    let to = basis.position(to_mode)?;
    let from = basis.position(from_mode)?;
    if to == from {
        return number_op(basis, to_mode);
    }
    let mut triplets = Vec::new();
    for s in 0..basis.total_dim() {
        let n_from = basis.occupation_of(s, from);
        let n_to = basis.occupation_of(s, to);
        if n_from >= 1 && n_to + 1 < basis.mode(to).dim {
            let t = s - basis.stride(from) + basis.stride(to);
            let amp = ((n_from as f64) * (n_to as f64 + 1.0)).sqrt();
            triplets.push((t as u32, s as u32, Complex64::new(amp, 0.0)));
        }
    }
    Ok(SparseOperator::from_triplets(basis.total_dim(), triplets, false))
}

/// Pair creation `a_i† a_j†` on two distinct modes.
pub fn pair_create_op(
    basis: &BasisIndex,
    mode_i: &str,
    mode_j: &str,
) -> Result<SparseOperator, FockError> {
    let i = basis.position(mode_i)?;
    let j = basis.position(mode_j)?;
    let mut triplets = Vec::new();
    for s in 0..basis.total_dim() {
        let n_i = basis.occupation_of(s, i);
        let n_j = basis.occupation_of(s, j);
        if i != j && n_i + 1 < basis.mode(i).dim && n_j + 1 < basis.mode(j).dim {
            let t = s + basis.stride(i) + basis.stride(j);
            let amp = ((n_i as f64 + 1.0) * (n_j as f64 + 1.0)).sqrt();
            triplets.push((t as u32, s as u32, Complex64::new(amp, 0.0)));
        }
    }
    Ok(SparseOperator::from_triplets(basis.total_dim(), triplets, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hc_sites(n: usize) -> BasisIndex {
        let modes = (0..n).map(|i| ModeSpec::hardcore_site(format!("q{i}"))).collect();
        BasisIndex::new(modes).unwrap()
    }

    #[test]
    fn basis_dims() {
        assert_eq!(hc_sites(4).total_dim(), 16);
        let mut modes: Vec<ModeSpec> =
            (0..4).map(|i| ModeSpec::hardcore_site(format!("q{i}"))).collect();
        modes.push(ModeSpec::resonator("r0", 2));
        modes.push(ModeSpec::resonator("r3", 2));
        assert_eq!(BasisIndex::new(modes).unwrap().total_dim(), 64);
    }

    #[test]
    fn single_mode_enumeration_is_identity() {
        let basis = BasisIndex::new(vec![ModeSpec::site("m", 5)]).unwrap();
        for n in 0..5 {
            assert_eq!(basis.index_of(&[n]), n);
            assert_eq!(basis.occupations(n), vec![n]);
        }
    }

    #[test]
    fn build_errors() {
        assert!(matches!(BasisIndex::new(vec![]), Err(FockError::EmptyModeList)));
        assert!(matches!(
            BasisIndex::new(vec![ModeSpec::site("a", 1)]),
            Err(FockError::DimTooSmall { .. })
        ));
        assert!(matches!(
            BasisIndex::new(vec![ModeSpec::site("a", 2), ModeSpec::site("a", 2)]),
            Err(FockError::DuplicateLabel(_))
        ));
        let b = hc_sites(2);
        assert!(matches!(annihilation_op(&b, "nope"), Err(FockError::UnknownMode(_))));
    }

    #[test]
    fn row_major_bijection() {
        let basis = BasisIndex::new(vec![
            ModeSpec::site("a", 2),
            ModeSpec::site("b", 3),
            ModeSpec::resonator("r", 2),
        ])
        .unwrap();
        assert_eq!(basis.total_dim(), 12);
        for s in 0..12 {
            assert_eq!(basis.index_of(&basis.occupations(s)), s);
        }
        // first-declared mode has the largest stride
        assert_eq!(basis.index_of(&[1, 0, 0]), 6);
        assert_eq!(basis.index_of(&[0, 1, 0]), 2);
        assert_eq!(basis.index_of(&[0, 0, 1]), 1);
    }

    #[test]
    fn annihilation_hardcore() {
        let basis = BasisIndex::new(vec![ModeSpec::hardcore_site("q0")]).unwrap();
        let a = annihilation_op(&basis, "q0").unwrap();
        assert_eq!(a.entries(), &[(0, 1, Complex64::ONE)]);
    }

    #[test]
    fn annihilation_dim3() {
        let basis = BasisIndex::new(vec![ModeSpec::site("m", 3)]).unwrap();
        let a = annihilation_op(&basis, "m").unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.entries()[0], (0, 1, Complex64::ONE));
        assert_eq!(a.entries()[1].0, 1);
        assert_eq!(a.entries()[1].1, 2);
        assert!((a.entries()[1].2.re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adagger_a_equals_number_op() {
        // direct sparse-multiply oracle
        for dims in [vec![2usize, 2], vec![3, 2], vec![4]] {
            let modes = dims
                .iter()
                .enumerate()
                .map(|(i, &d)| ModeSpec::site(format!("m{i}"), d))
                .collect();
            let basis = BasisIndex::new(modes).unwrap();
            for m in 0..dims.len() {
                let label = format!("m{m}");
                let a = annihilation_op(&basis, &label).unwrap();
                let n = number_op(&basis, &label).unwrap();
                let prod = a.dagger().mul(&a).unwrap();
                let defect = prod.sub(&n).unwrap().max_abs();
                assert!(defect < 1e-14, "mode {label} dims {dims:?}: defect {defect}");
            }
        }
    }

    #[test]
    fn number_diagonals() {
        let b2 = hc_sites(1);
        let n2 = number_op(&b2, "q0").unwrap();
        assert_eq!(n2.entries(), &[(1, 1, Complex64::ONE)]);
        let b3 = BasisIndex::new(vec![ModeSpec::site("m", 3)]).unwrap();
        let n3 = number_op(&b3, "m").unwrap();
        assert_eq!(
            n3.entries(),
            &[(1, 1, Complex64::ONE), (2, 2, Complex64::new(2.0, 0.0))]
        );
    }

    #[test]
    fn number_trace_over_four_sites() {
        // sum of occupations of one site over all 16 basis states
        let basis = hc_sites(4);
        for i in 0..4 {
            let n = number_op(&basis, &format!("q{i}")).unwrap();
            assert!((n.trace().re - 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn total_number_eigenvalue_multiplicities() {
        let basis = hc_sites(4);
        let nt = total_number_op(&basis).unwrap();
        let mut counts = [0usize; 5];
        for s in 0..16 {
            let n = basis.site_occupation_total(s);
            counts[n] += 1;
        }
        assert_eq!(counts, [1, 4, 6, 4, 1]);
        // N|1111> = 4|1111>
        let full = basis.index_of(&[1, 1, 1, 1]);
        let mut x = DVector::zeros(16);
        x[full] = Complex64::ONE;
        let y = nt.apply(&x).unwrap();
        assert_eq!(y[full], Complex64::new(4.0, 0.0));
    }

    #[test]
    fn total_number_ignores_resonators() {
        let basis = BasisIndex::new(vec![
            ModeSpec::hardcore_site("q0"),
            ModeSpec::resonator("r0", 2),
        ])
        .unwrap();
        let nt = total_number_op(&basis).unwrap();
        let s = basis.index_of(&[0, 1]); // resonator excited, site empty
        assert_eq!(basis.site_occupation_total(s), 0);
        assert!(nt.entries().iter().all(|&(r, _, _)| r != s as u32));
    }

    #[test]
    fn truncated_commutation() {
        // [a, a†] = 1 - dim·|dim-1><dim-1| per mode
        for d in 2..=4usize {
            let basis = BasisIndex::new(vec![ModeSpec::site("m", d)]).unwrap();
            let a = annihilation_op(&basis, "m").unwrap();
            let comm = a.commutator(&a.dagger()).unwrap();
            let mut expect = vec![1.0; d];
            expect[d - 1] = 1.0 - d as f64;
            let defect = comm.sub(&SparseOperator::from_diagonal(&expect)).unwrap().max_abs();
            assert!(defect < 1e-14, "dim {d}: defect {defect}");
        }
    }

    #[test]
    fn different_modes_commute() {
        let basis = BasisIndex::new(vec![ModeSpec::site("a", 3), ModeSpec::site("b", 2)]).unwrap();
        let aa = annihilation_op(&basis, "a").unwrap();
        let ab = annihilation_op(&basis, "b").unwrap();
        assert!(aa.commutator(&ab).unwrap().is_zero());
        assert!(aa.commutator(&ab.dagger()).unwrap().is_zero());
    }

    #[test]
    fn hermitian_ops_match_adjoint() {
        let basis = hc_sites(3);
        for label in ["q0", "q1", "q2"] {
            let n = number_op(&basis, label).unwrap();
            assert_eq!(n.hermiticity_defect(), 0.0);
        }
        assert_eq!(total_number_op(&basis).unwrap().hermiticity_defect(), 0.0);
    }

    #[test]
    fn hop_and_pair_ops() {
        let basis = hc_sites(2);
        let hop = hop_op(&basis, "q1", "q0").unwrap(); // a1† a0
        assert_eq!(hop.entries(), &[(1, 2, Complex64::ONE)]); // |10> -> |01>
        let pair = pair_create_op(&basis, "q0", "q1").unwrap();
        assert_eq!(pair.entries(), &[(3, 0, Complex64::ONE)]);
        // consistency with ladder-operator composition
        let a0 = annihilation_op(&basis, "q0").unwrap();
        let a1 = annihilation_op(&basis, "q1").unwrap();
        assert_eq!(hop.entries(), a1.dagger().mul(&a0).unwrap().entries());
        assert_eq!(
            pair.entries(),
            a0.dagger().mul(&a1.dagger()).unwrap().entries()
        );
    }

    #[test]
    fn csr_products_match_dense() {
        let basis = BasisIndex::new(vec![ModeSpec::site("a", 3), ModeSpec::site("b", 2)]).unwrap();
        let op = hop_op(&basis, "a", "b")
            .unwrap()
            .add(&number_op(&basis, "a").unwrap().scaled(Complex64::new(0.0, 0.5)))
            .unwrap();
        let csr = CsrMatrix::from_sparse(&op);
        let n = op.dim();
        let dense = op.to_dense();
        let rho = DMatrix::from_fn(n, n, |i, j| Complex64::new(i as f64 + 0.3, j as f64 - 1.0));
        let alpha = Complex64::new(0.7, -0.2);

        let mut out = vec![Complex64::ZERO; n * n];
        csr.acc_mul_left(alpha, rho.as_slice(), &mut out);
        let want = &dense * &rho * alpha;
        for (o, w) in out.iter().zip(want.as_slice()) {
            assert!((o - w).norm() < 1e-12);
        }

        let mut out = vec![Complex64::ZERO; n * n];
        csr.acc_mul_right(alpha, rho.as_slice(), &mut out);
        let want = &rho * &dense * alpha;
        for (o, w) in out.iter().zip(want.as_slice()) {
            assert!((o - w).norm() < 1e-12);
        }

        let mut out = vec![Complex64::ZERO; n * n];
        csr.acc_mul_right_dagger(alpha, rho.as_slice(), &mut out);
        let want = &rho * dense.adjoint() * alpha;
        for (o, w) in out.iter().zip(want.as_slice()) {
            assert!((o - w).norm() < 1e-12);
        }
    }
}
