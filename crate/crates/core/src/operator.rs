//! Pauli strings, sparse Hermitian operators, dense density matrices and
//! partial traces on an `L`-qubit register.
//!
//! Site `j` (1-based) is stored in bit `L - j` of a basis index, so site 1 is
//! the most significant bit and Kronecker products read left to right.

use std::collections::BTreeMap;
use std::fmt;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hermiticity and unit-trace tolerance applied when a [`DensityMatrix`] is built.
pub const STATE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a [`DensityMatrix`].
pub const PSD_TOL: f64 = 1e-10;
/// Imaginary parts of expectation values above this are reported as errors.
pub const IMAG_ERROR_TOL: f64 = 1e-8;
/// Chains longer than this are rejected (2^16 basis states).
pub const MAX_SITES: usize = 16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Dense 2x2 Pauli matrix.
    pub fn matrix(self) -> Mat<Complex64> {
        let m = match self {
            Axis::X => [[ZERO, ONE], [ONE, ZERO]],
            Axis::Y => [[ZERO, -I], [I, ZERO]],
            Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        };
        Mat::from_fn(2, 2, |i, j| m[i][j])
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(s)
    }
}

/// A 1-based site on a periodic chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteIndex(usize);

impl SiteIndex {
    pub fn new(j: usize, len: usize) -> Result<Self> {
        if j == 0 || j > len {
            return Err(Error::SiteOutOfRange { site: j, len });
        }
        Ok(SiteIndex(j))
    }

    /// Wraps any positive label onto `1..=len`, so `len + 1` is site 1.
    pub fn periodic(j: usize, len: usize) -> Self {
        assert!(len > 0 && j > 0, "periodic site labels start at 1");
        SiteIndex((j - 1) % len + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn next(self, len: usize) -> Self {
        SiteIndex::periodic(self.0 + 1, len)
    }

    fn bit(self, len: usize) -> usize {
        len - self.0
    }
}

/// Tensor product of single-site Pauli matrices, identity elsewhere.
///
/// Stored in symplectic form: `x_mask` marks sites carrying X or Y and
/// `z_mask` sites carrying Z or Y. Acting on basis state `c` gives
/// `i^{#Y} (-1)^{popcount(c & z_mask)} |c ^ x_mask>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    len: usize,
    factors: BTreeMap<usize, Axis>,
    x_mask: usize,
    z_mask: usize,
    y_count: usize,
}

impl PauliString {
    pub fn identity(len: usize) -> Result<Self> {
        Self::new(len, [])
    }

    /// Builds a string from `(site, axis)` pairs; a site may appear once.
    pub fn new(len: usize, factors: impl IntoIterator<Item = (usize, Axis)>) -> Result<Self> {
        check_len(len)?;
        let mut map = BTreeMap::new();
        let (mut x_mask, mut z_mask, mut y_count) = (0usize, 0usize, 0usize);
        for (j, axis) in factors {
            let site = SiteIndex::new(j, len)?;
            if map.insert(site.get(), axis).is_some() {
                return Err(Error::arg(format!("site {j} appears twice in a Pauli string")));
            }
            let bit = 1usize << site.bit(len);
            match axis {
                Axis::X => x_mask |= bit,
                Axis::Z => z_mask |= bit,
                Axis::Y => {
                    x_mask |= bit;
                    z_mask |= bit;
                    y_count += 1;
                }
            }
        }
        Ok(PauliString { len, factors: map, x_mask, z_mask, y_count })
    }

    pub fn num_sites(&self) -> usize {
        self.len
    }

    pub fn dim(&self) -> usize {
        1 << self.len
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, Axis)> + '_ {
        self.factors.iter().map(|(&j, &a)| (j, a))
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    /// Row index of the single nonzero entry in column `col`.
    #[inline]
    pub fn target(&self, col: usize) -> usize {
        col ^ self.x_mask
    }

    /// Value of the single nonzero entry in column `col`.
    #[inline]
    pub fn amplitude(&self, col: usize) -> Complex64 {
        let phase = match self.y_count % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        if (col & self.z_mask).count_ones() % 2 == 1 {
            -phase
        } else {
            phase
        }
    }

    /// All `2^L` nonzero entries as `(row, col, value)`.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim()).map(move |c| (self.target(c), c, self.amplitude(c)))
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        let mut m = Mat::zeros(self.dim(), self.dim());
        for (r, c, v) in self.nonzeros() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let s = (self.x_mask & other.z_mask).count_ones() + (self.z_mask & other.x_mask).count_ones();
        s % 2 == 0
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("I");
        }
        let mut first = true;
        for (j, a) in self.factors() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{a}{j}")?;
        }
        Ok(())
    }
}

fn check_len(len: usize) -> Result<()> {
    if len == 0 || len > MAX_SITES {
        return Err(Error::arg(format!("chain length must be in 1..={MAX_SITES}, got {len}")));
    }
    Ok(())
}

/// `σ^axis` on site `j` of an `len`-site register.
pub fn site_operator(axis: Axis, j: usize, len: usize) -> Result<PauliString> {
    PauliString::new(len, [(j, axis)])
}

/// Sparse Hermitian operator, stored row by row with sorted column indices.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    len: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl HermitianOperator {
    /// `Σ c_k P_k` for real coefficients `c_k`.
    pub fn from_terms<'a>(len: usize, terms: impl IntoIterator<Item = (f64, &'a PauliString)>) -> Result<Self> {
        check_len(len)?;
        let dim = 1usize << len;
        let mut acc: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); dim];
        for (coeff, p) in terms {
            if p.num_sites() != len {
                return Err(Error::DimensionMismatch { expected: len, found: p.num_sites() });
            }
            if !coeff.is_finite() {
                return Err(Error::arg(format!("non-finite coefficient on {p}")));
            }
            if coeff == 0.0 {
                continue;
            }
            for (r, c, v) in p.nonzeros() {
                *acc[r].entry(c).or_insert(ZERO) += v * coeff;
            }
        }
        let rows = acc
            .into_iter()
            .map(|row| row.into_iter().filter(|(_, v)| v.norm() != 0.0).collect())
            .collect();
        Ok(HermitianOperator { len, rows })
    }

    pub fn num_sites(&self) -> usize {
        self.len
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, r: usize) -> &[(usize, Complex64)] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        match self.rows[r].binary_search_by_key(&c, |&(col, _)| col) {
            Ok(k) => self.rows[r][k].1,
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `max |H - H^†|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                worst = worst.max((v - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|r| self.get(r, r)).sum()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, h)| h * v[c]).sum())
            .collect()
    }

    /// Largest `|H_rc|` with `r` and `c` in different groups of `blocks`.
    /// Indices not covered by any block count as their own group.
    pub fn off_block_norm(&self, blocks: &[&[usize]]) -> f64 {
        let mut group = vec![usize::MAX; self.dim()];
        for (g, b) in blocks.iter().enumerate() {
            for &i in b.iter() {
                group[i] = g;
            }
        }
        let mut worst = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                if group[r] != group[c] || group[r] == usize::MAX && r != c {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }

    /// Restriction to `basis`, returned as a dense real symmetric matrix.
    /// Fails if any retained entry has a non-negligible imaginary part.
    pub fn real_block(&self, basis: &[usize]) -> Result<Mat<f64>> {
        let n = basis.len();
        let mut pos = vec![usize::MAX; self.dim()];
        for (k, &i) in basis.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = Mat::<f64>::zeros(n, n);
        for (k, &i) in basis.iter().enumerate() {
            for &(c, v) in &self.rows[i] {
                let kc = pos[c];
                if kc == usize::MAX {
                    continue;
                }
                if v.im.abs() > 1e-14 {
                    return Err(Error::NumericalConsistency(format!(
                        "Hamiltonian entry ({i},{c}) is complex ({v}); only real Hamiltonians are diagonalized"
                    )));
                }
                m[(k, kc)] = v.re;
            }
        }
        Ok(m)
    }
}

/// Density matrix on `n` qubits (dimension `2^n`), stored densely.
///
/// Construction through [`DensityMatrix::new`] checks Hermiticity and unit
/// trace to [`STATE_TOL`] and positivity to [`PSD_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: Mat<Complex64>,
}

impl DensityMatrix {
    pub fn new(mat: Mat<Complex64>) -> Result<Self> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(Error::InvalidState(format!("matrix is {}x{}", n, mat.ncols())));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidState(format!("dimension {n} is not a power of two >= 2")));
        }
        // NaN passes every tolerance comparison below.
        if (0..n).any(|i| (0..n).any(|j| !(mat[(i, j)].re.is_finite() && mat[(i, j)].im.is_finite()))) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm = hermiticity_defect(mat.as_ref());
        if herm > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = trace(mat.as_ref());
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let evals = hermitian_eigenvalues(mat.as_ref())?;
        if let Some(&min) = evals.first() {
            if min < -PSD_TOL {
                return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
            }
        }
        Ok(DensityMatrix { mat })
    }

    /// Skips validation; callers guarantee the matrix is a valid state.
    pub(crate) fn from_mat_unchecked(mat: Mat<Complex64>) -> Self {
        debug_assert!(mat.nrows() == mat.ncols() && mat.nrows().is_power_of_two());
        DensityMatrix { mat }
    }

    pub fn maximally_mixed(qubits: usize) -> Self {
        let n = 1usize << qubits;
        let v = Complex64::new(1.0 / n as f64, 0.0);
        Self::from_mat_unchecked(Mat::from_fn(n, n, |i, j| if i == j { v } else { ZERO }))
    }

    /// `|ψ><ψ|` for a normalized state vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let n = amplitudes.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidState(format!("state vector length {n} is not a power of two >= 2")));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("state vector has squared norm {norm}")));
        }
        Ok(Self::from_mat_unchecked(Mat::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj())))
    }

    /// Single-qubit state `(I + r·σ)/2`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1.0 + PSD_TOL {
            return Err(Error::InvalidState(format!("Bloch vector has length {norm}")));
        }
        let m = [
            [Complex64::new(0.5 * (1.0 + r[2]), 0.0), Complex64::new(0.5 * r[0], -0.5 * r[1])],
            [Complex64::new(0.5 * r[0], 0.5 * r[1]), Complex64::new(0.5 * (1.0 - r[2]), 0.0)],
        ];
        Ok(Self::from_mat_unchecked(Mat::from_fn(2, 2, |i, j| m[i][j])))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn as_mat(&self) -> MatRef<'_, Complex64> {
        self.mat.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        trace(self.mat.as_ref()).re
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        let n = self.dim();
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += self.mat[(i, j)].norm_sqr();
            }
        }
        s
    }

    /// Eigenvalues in nondecreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(self.mat.as_ref())
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        Self::from_mat_unchecked(kron(self.as_mat(), other.as_mat()))
    }

    /// Bloch vector `(Tr ρσ^x, Tr ρσ^y, Tr ρσ^z)` of a single-qubit state.
    pub fn bloch_vector(&self) -> Result<[f64; 3]> {
        if self.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: self.dim() });
        }
        let m = &self.mat;
        Ok([2.0 * m[(1, 0)].re, 2.0 * m[(1, 0)].im, (m[(0, 0)] - m[(1, 1)]).re])
    }

    /// Entrywise `max |a_ij - b_ij|`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs_diff(self.as_mat(), other.as_mat())
    }
}

pub(crate) fn trace(m: MatRef<'_, Complex64>) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub(crate) fn hermiticity_defect(m: MatRef<'_, Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn max_abs_diff(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

pub(crate) fn hermitian_eigenvalues(m: MatRef<'_, Complex64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

pub(crate) fn kron(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> Mat<Complex64> {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Index bookkeeping for splitting an `L`-site register into an ordered list
/// of kept sites and the (ascending) remaining environment.
#[derive(Clone, Debug)]
pub(crate) struct SiteSplit {
    kept_dim: usize,
    env_dim: usize,
    /// Full basis index of (kept configuration `a`, environment `e`) at `a * env_dim + e`.
    index: Vec<usize>,
    /// For each full basis index, `e * kept_dim + a`.
    env_major: Vec<usize>,
}

impl SiteSplit {
    pub(crate) fn new(keep: &[usize], len: usize) -> Result<Self> {
        check_len(len)?;
        if keep.is_empty() {
            return Err(Error::arg("partial trace must keep at least one site"));
        }
        let mut seen = vec![false; len + 1];
        for &j in keep {
            SiteIndex::new(j, len)?;
            if seen[j] {
                return Err(Error::arg(format!("site {j} listed twice")));
            }
            seen[j] = true;
        }
        let env: Vec<usize> = (1..=len).filter(|&j| !seen[j]).collect();
        let m = keep.len();
        let kept_dim = 1usize << m;
        let env_dim = 1usize << env.len();
        let mut index = vec![0usize; 1 << len];
        let mut env_major = vec![0usize; 1 << len];
        for i in 0..(1usize << len) {
            let pick = |sites: &[usize]| {
                sites.iter().fold(0usize, |acc, &j| (acc << 1) | ((i >> (len - j)) & 1))
            };
            let a = pick(keep);
            let e = pick(&env);
            index[a * env_dim + e] = i;
            env_major[i] = e * kept_dim + a;
        }
        Ok(SiteSplit { kept_dim, env_dim, index, env_major })
    }

    pub(crate) fn kept_dim(&self) -> usize {
        self.kept_dim
    }

    #[inline]
    pub(crate) fn full_index(&self, kept: usize, env: usize) -> usize {
        self.index[kept * self.env_dim + env]
    }

    /// Position of full basis index `i` in an environment-major buffer.
    #[inline]
    pub(crate) fn env_major(&self, i: usize) -> usize {
        self.env_major[i]
    }

    /// `Tr_env` of an arbitrary (not necessarily normalized) operator.
    pub(crate) fn trace_out(&self, m: MatRef<'_, Complex64>) -> Mat<Complex64> {
        let k = self.kept_dim;
        Mat::from_fn(k, k, |a, b| {
            (0..self.env_dim).map(|e| m[(self.full_index(a, e), self.full_index(b, e))]).sum()
        })
    }
}

/// Reduced state on the ordered sites `keep` (1-based) of an `len`-site state.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize], len: usize) -> Result<DensityMatrix> {
    if rho.dim() != 1usize << len.min(MAX_SITES) || len > MAX_SITES {
        return Err(Error::DimensionMismatch { expected: 1usize << len.min(MAX_SITES), found: rho.dim() });
    }
    let split = SiteSplit::new(keep, len)?;
    Ok(DensityMatrix::from_mat_unchecked(split.trace_out(rho.as_mat())))
}

/// `Tr[P ρ]`, checked to be real.
pub fn expectation(rho: &DensityMatrix, op: &PauliString) -> Result<f64> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: rho.dim() });
    }
    let m = rho.as_mat();
    let v: Complex64 = (0..op.dim()).map(|c| op.amplitude(c) * m[(c, op.target(c))]).sum();
    if v.im.abs() > IMAG_ERROR_TOL {
        return Err(Error::NumericalConsistency(format!(
            "<{op}> has imaginary part {:e}; input is not Hermitian",
            v.im
        )));
    }
    Ok(v.re)
}
