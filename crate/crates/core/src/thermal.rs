//! Canonical Gibbs states from sector-blocked exact diagonalization, their
//! few-site reductions and nearest-neighbour correlators.

use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{build_hamiltonian, symmetry_sectors, ModelSpec, SectorLabel, SymmetrySectorPlan};
use crate::operator::{DensityMatrix, SiteIndex, SiteSplit};

/// Relative Gibbs weights below this are dropped.
pub const WEIGHT_CUTOFF: f64 = 1e-300;
/// Tolerance for the translation-invariance check on reduced states.
pub const TRANSLATION_TOL: f64 = 1e-9;
/// Largest off-block Hamiltonian element accepted by a sector plan.
pub const OFF_BLOCK_TOL: f64 = 1e-12;

/// Eigenpairs of one symmetry sector; eigenvectors are the columns of
/// `vectors`, expressed in the sector's `basis`.
#[derive(Clone, Debug)]
pub struct SectorEigen {
    pub label: SectorLabel,
    pub basis: Vec<usize>,
    pub energies: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// Full spectrum of a chain Hamiltonian. Independent of temperature, so one
/// diagonalization serves every `kT` of a sweep point.
#[derive(Clone, Debug)]
pub struct Spectrum {
    spec: ModelSpec,
    sectors: Vec<SectorEigen>,
    ground_energy: f64,
}

impl Spectrum {
    /// Diagonalizes `spec` block by block using [`symmetry_sectors`].
    pub fn compute(spec: &ModelSpec) -> Result<Self> {
        Self::compute_with_plan(spec, &symmetry_sectors(spec))
    }

    /// Diagonalizes using an explicit sector plan, which must partition the
    /// basis and block-diagonalize the Hamiltonian.
    pub fn compute_with_plan(spec: &ModelSpec, plan: &SymmetrySectorPlan) -> Result<Self> {
        if plan.num_sites() != spec.len() || !plan.is_partition() {
            return Err(Error::arg(format!("sector plan does not partition the basis of {spec}")));
        }
        let h = build_hamiltonian(spec);
        let leak = plan.off_block_norm(&h);
        if leak > OFF_BLOCK_TOL {
            return Err(Error::NumericalConsistency(format!(
                "sector plan leaves off-block elements of size {leak:e} in {spec}"
            )));
        }
        let sectors = plan
            .sectors()
            .par_iter()
            .map(|s| {
                let block = h.real_block(&s.basis)?;
                let evd = block.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
                let energies: Vec<f64> = evd.S().column_vector().iter().copied().collect();
                Ok(SectorEigen { label: s.label, basis: s.basis.clone(), energies, vectors: evd.U().to_owned() })
            })
            .collect::<Result<Vec<_>>>()?;
        let ground_energy = sectors
            .iter()
            .flat_map(|s| s.energies.iter().copied())
            .fold(f64::INFINITY, f64::min);
        if !ground_energy.is_finite() {
            return Err(Error::Eigen(format!("non-finite spectrum for {spec}")));
        }
        Ok(Spectrum { spec: *spec, sectors, ground_energy })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn sectors(&self) -> &[SectorEigen] {
        &self.sectors
    }

    pub fn ground_energy(&self) -> f64 {
        self.ground_energy
    }

    /// All eigenvalues, sorted ascending.
    pub fn energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.sectors.iter().flat_map(|s| s.energies.iter().copied()).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn thermal(self: &Arc<Self>, kt: f64) -> Result<ThermalState> {
        check_temperature(kt)?;
        let beta = 1.0 / kt;
        let cutoff = -WEIGHT_CUTOFF.ln();
        let mut weights: Vec<Vec<f64>> = self
            .sectors
            .iter()
            .map(|s| {
                s.energies
                    .iter()
                    .map(|&e| {
                        let x = (e - self.ground_energy) * beta;
                        if x > cutoff {
                            0.0
                        } else {
                            (-x).exp()
                        }
                    })
                    .collect()
            })
            .collect();
        let z_shifted: f64 = weights.iter().flatten().sum();
        for w in weights.iter_mut().flatten() {
            *w /= z_shifted;
        }
        let log_z = z_shifted.ln() - self.ground_energy * beta;
        if !log_z.is_finite() {
            return Err(Error::NumericalConsistency(format!("log Z is not finite at kT = {kt}")));
        }
        Ok(ThermalState { spectrum: Arc::clone(self), kt, weights, log_z })
    }

    /// `Tr_env |v><v|` on `sites` for every eigenvector whose energy lies
    /// within `max_gap` of the ground state, as flattened `K x K` real
    /// matrices (`K = 2^|sites|`). Rows follow `sectors()` and eigenvalue order.
    pub fn eigenvector_reductions(&self, sites: &[usize], max_gap: f64) -> Result<EigenReductions> {
        let split = SiteSplit::new(sites, self.spec.len())?;
        let k = split.kept_dim();
        let mut mats = Vec::with_capacity(self.sectors.len());
        let mut buf = vec![0.0f64; 1 << self.spec.len()];
        for s in &self.sectors {
            let count = s.energies.iter().take_while(|&&e| e - self.ground_energy <= max_gap).count();
            let mut out = vec![0.0f64; count * k * k];
            for (n, m) in out.chunks_exact_mut(k * k).enumerate() {
                accumulate_reduction(&split, s, n, 1.0, &mut buf, m);
            }
            mats.push(out);
        }
        Ok(EigenReductions { kept_dim: k, ground_energy: self.ground_energy, energies: self.sectors.iter().map(|s| s.energies.clone()).collect(), mats })
    }
}

/// Adds `weight * Tr_env |v_n><v_n|` into the row-major `K x K` buffer `out`.
/// `scratch` is a zeroed buffer of length `2^L` and is left zeroed.
fn accumulate_reduction(split: &SiteSplit, sector: &SectorEigen, n: usize, weight: f64, scratch: &mut [f64], out: &mut [f64]) {
    let k = split.kept_dim();
    let col = sector.vectors.col(n);
    for (p, &i) in sector.basis.iter().enumerate() {
        scratch[split.env_major(i)] = col[p];
    }
    for chunk in scratch.chunks_exact(k) {
        if chunk.iter().all(|&x| x == 0.0) {
            continue;
        }
        for a in 0..k {
            let wa = weight * chunk[a];
            if wa == 0.0 {
                continue;
            }
            let row = &mut out[a * k..(a + 1) * k];
            for (b, r) in row.iter_mut().enumerate() {
                *r += wa * chunk[b];
            }
        }
    }
    for &i in &sector.basis {
        scratch[split.env_major(i)] = 0.0;
    }
}

/// Per-eigenvector reduced matrices, reusable across temperatures.
#[derive(Clone, Debug)]
pub struct EigenReductions {
    kept_dim: usize,
    ground_energy: f64,
    energies: Vec<Vec<f64>>,
    mats: Vec<Vec<f64>>,
}

impl EigenReductions {
    /// Gibbs average at `kt`. Fails if a state with non-negligible weight
    /// was excluded when the reductions were computed.
    pub fn thermal_average(&self, kt: f64) -> Result<DensityMatrix> {
        check_temperature(kt)?;
        let k = self.kept_dim;
        let cutoff = -WEIGHT_CUTOFF.ln();
        let mut acc = vec![0.0f64; k * k];
        let mut z = 0.0;
        for (energies, mats) in self.energies.iter().zip(&self.mats) {
            let stored = mats.len() / (k * k);
            for (n, &e) in energies.iter().enumerate() {
                let x = (e - self.ground_energy) / kt;
                if x > cutoff {
                    continue;
                }
                if n >= stored {
                    return Err(Error::arg(format!(
                        "eigenvector reductions were truncated below the weight needed at kT = {kt}"
                    )));
                }
                let w = (-x).exp();
                z += w;
                for (a, m) in acc.iter_mut().zip(&mats[n * k * k..(n + 1) * k * k]) {
                    *a += w * m;
                }
            }
        }
        Ok(real_state(k, &acc, z))
    }
}

fn real_state(k: usize, acc: &[f64], norm: f64) -> DensityMatrix {
    DensityMatrix::from_mat_unchecked(Mat::from_fn(k, k, |a, b| {
        Complex64::new(0.5 * (acc[a * k + b] + acc[b * k + a]) / norm, 0.0)
    }))
}

fn check_temperature(kt: f64) -> Result<()> {
    if !(kt > 0.0 && kt.is_finite()) {
        return Err(Error::arg(format!("kT must be positive and finite, got {kt}")));
    }
    Ok(())
}

/// `ϱ = e^{-H/kT} / Z`, held as Gibbs weights over a [`Spectrum`].
#[derive(Clone, Debug)]
pub struct ThermalState {
    spectrum: Arc<Spectrum>,
    kt: f64,
    /// Normalized weights, laid out like `spectrum.sectors()`.
    weights: Vec<Vec<f64>>,
    log_z: f64,
}

/// Gibbs state of `spec` at temperature `kt` (in units with `k_B = 1`).
pub fn gibbs_state(spec: &ModelSpec, kt: f64) -> Result<ThermalState> {
    check_temperature(kt)?;
    Arc::new(Spectrum::compute(spec)?).thermal(kt)
}

impl ThermalState {
    pub fn spectrum(&self) -> &Arc<Spectrum> {
        &self.spectrum
    }

    pub fn model(&self) -> &ModelSpec {
        self.spectrum.model()
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }

    pub fn log_partition_function(&self) -> f64 {
        self.log_z
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `Tr[H ϱ]`.
    pub fn energy(&self) -> f64 {
        self.spectrum
            .sectors
            .iter()
            .zip(&self.weights)
            .flat_map(|(s, w)| s.energies.iter().zip(w).map(|(e, w)| e * w))
            .sum()
    }

    /// `Tr[ϱ²]`.
    pub fn purity(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum()
    }

    /// The full `2^L x 2^L` Gibbs matrix. Memory grows as `4^L`; meant for
    /// small chains and cross-checks.
    pub fn density_matrix(&self) -> DensityMatrix {
        let n = 1usize << self.model().len();
        let mut m = Mat::<f64>::zeros(n, n);
        for (s, w) in self.spectrum.sectors.iter().zip(&self.weights) {
            for (k, &wk) in w.iter().enumerate() {
                if wk == 0.0 {
                    continue;
                }
                let v = s.vectors.col(k);
                for (p, &i) in s.basis.iter().enumerate() {
                    let vi = wk * v[p];
                    for (q, &j) in s.basis.iter().enumerate() {
                        m[(i, j)] += vi * v[q];
                    }
                }
            }
        }
        DensityMatrix::from_mat_unchecked(Mat::from_fn(n, n, |i, j| Complex64::new(m[(i, j)], 0.0)))
    }

    /// Reduced state on the ordered `sites`, accumulated from eigenvector
    /// outer products without forming the full Gibbs matrix.
    pub fn reduced_state(&self, sites: &[usize]) -> Result<DensityMatrix> {
        let split = SiteSplit::new(sites, self.model().len())?;
        let k = split.kept_dim();
        let mut acc = vec![0.0f64; k * k];
        let mut scratch = vec![0.0f64; 1 << self.model().len()];
        for (s, w) in self.spectrum.sectors.iter().zip(&self.weights) {
            for (n, &wn) in w.iter().enumerate() {
                if wn > 0.0 {
                    accumulate_reduction(&split, s, n, wn, &mut scratch, &mut acc);
                }
            }
        }
        Ok(real_state(k, &acc, 1.0))
    }

    /// Reduced states on one site, a neighbouring pair and a second pair
    /// shifted by one site, with the translation-invariance check applied.
    pub fn local_states(&self) -> Result<LocalStates> {
        let len = self.model().len();
        if len >= 3 {
            let triple = self.reduced_state(&[1, 2, 3])?;
            LocalStates::from_triple(&triple)
        } else {
            let first = self.reduced_state(&[1, 2])?;
            let second = self.reduced_state(&[2, SiteIndex::periodic(3, len).get()])?;
            LocalStates::from_pairs(first, second)
        }
    }

    pub fn correlators(&self) -> Result<CorrelatorSet> {
        Ok(self.local_states()?.correlators)
    }
}

/// `ρ₁` (site 1), `ρ₁₂` and `ρ₂₃` of a translation-invariant chain state,
/// plus the correlators read off `ρ₁₂`.
#[derive(Clone, Debug)]
pub struct LocalStates {
    pub site: DensityMatrix,
    pub pair: DensityMatrix,
    pub shifted_pair: DensityMatrix,
    pub correlators: CorrelatorSet,
}

impl LocalStates {
    /// From the three-site state on consecutive sites (1, 2, 3).
    pub fn from_triple(triple: &DensityMatrix) -> Result<Self> {
        if triple.dim() != 8 {
            return Err(Error::DimensionMismatch { expected: 8, found: triple.dim() });
        }
        let pair = SiteSplit::new(&[1, 2], 3)?.trace_out(triple.as_mat());
        let shifted = SiteSplit::new(&[2, 3], 3)?.trace_out(triple.as_mat());
        Self::from_pairs(DensityMatrix::from_mat_unchecked(pair), DensityMatrix::from_mat_unchecked(shifted))
    }

    pub fn from_pairs(pair: DensityMatrix, shifted_pair: DensityMatrix) -> Result<Self> {
        let drift = pair.max_abs_diff(&shifted_pair);
        if drift > TRANSLATION_TOL {
            return Err(Error::NumericalConsistency(format!(
                "reduced states on (1,2) and (2,3) differ by {drift:e}; state is not translation invariant"
            )));
        }
        let site = DensityMatrix::from_mat_unchecked(SiteSplit::new(&[1], 2)?.trace_out(pair.as_mat()));
        let correlators = CorrelatorSet::from_pair(&pair)?;
        Ok(LocalStates { site, pair, shifted_pair, correlators })
    }
}

/// One- and two-point functions `z = <σ^z_j>` and `ss = <σ^s_j σ^s_{j+1}>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelatorSet {
    pub z: f64,
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
}

impl CorrelatorSet {
    pub fn new(z: f64, xx: f64, yy: f64, zz: f64) -> Result<Self> {
        for (name, v) in [("z", z), ("xx", xx), ("yy", yy), ("zz", zz)] {
            if !(v.abs() <= 1.0 + 1e-10) {
                return Err(Error::arg(format!("correlator {name} = {v} outside [-1, 1]")));
            }
        }
        Ok(CorrelatorSet { z, xx, yy, zz })
    }

    /// Reads the correlators off a two-site state in the basis 00, 01, 10, 11.
    pub fn from_pair(pair: &DensityMatrix) -> Result<Self> {
        if pair.dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, found: pair.dim() });
        }
        let r = |i: usize, j: usize| pair.get(i, j);
        let z1 = (r(0, 0) + r(1, 1) - r(2, 2) - r(3, 3)).re;
        let z2 = (r(0, 0) - r(1, 1) + r(2, 2) - r(3, 3)).re;
        if (z1 - z2).abs() > TRANSLATION_TOL {
            return Err(Error::NumericalConsistency(format!("<σ^z> differs between sites: {z1} vs {z2}")));
        }
        // σ^xσ^x flips both spins, σ^yσ^y does too with sign -1 on 00<->11.
        let xx = 2.0 * (r(0, 3) + r(1, 2)).re;
        let yy = 2.0 * (r(1, 2) - r(0, 3)).re;
        let zz = (r(0, 0) - r(1, 1) - r(2, 2) + r(3, 3)).re;
        Self::new(z1, xx, yy, zz)
    }
}
