//! Mixed-state teleportation: Bell-measurement statistics, Bob's corrected
//! outputs, mean trace distance and mean fidelity, the two optimized
//! detectors, and their correlator closed forms.
//!
//! Qubit 1 is the input, qubits 2 (Alice) and 3 (Bob) form the channel; in
//! the 8-dimensional joint space qubit 1 is the most significant bit.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{Axis, DensityMatrix};
use crate::thermal::CorrelatorSet;

/// Bell-outcome probabilities at or below this are treated as impossible.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-14;
/// Detector values closer than this are reported as ties.
pub const TIE_TOL: f64 = 1e-12;
/// Kink-sign arguments smaller than this in magnitude are treated as zero.
pub const KINK_TOL: f64 = 1e-9;
/// Angular resolution at which the pure-input search stops refining.
pub const ANGLE_RESOLUTION: f64 = 1e-4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The four Bell states, in tie-break order `Φ⁺ < Φ⁻ < Ψ⁺ < Ψ⁻`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [BellState::PhiPlus, BellState::PhiMinus, BellState::PsiPlus, BellState::PsiMinus];

    /// Amplitudes in the basis 00, 01, 10, 11.
    pub fn amplitudes(self) -> [f64; 4] {
        let s = FRAC_1_SQRT_2;
        match self {
            BellState::PhiPlus => [s, 0.0, 0.0, s],
            BellState::PhiMinus => [s, 0.0, 0.0, -s],
            BellState::PsiPlus => [0.0, s, s, 0.0],
            BellState::PsiMinus => [0.0, s, -s, 0.0],
        }
    }

    pub fn projector(self) -> DensityMatrix {
        let a = self.amplitudes().map(|x| Complex64::new(x, 0.0));
        DensityMatrix::pure(&a).expect("Bell states are normalized")
    }

    pub fn name(self) -> &'static str {
        match self {
            BellState::PhiPlus => "phi+",
            BellState::PhiMinus => "phi-",
            BellState::PsiPlus => "psi+",
            BellState::PsiMinus => "psi-",
        }
    }
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Single-qubit correction Bob may apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Correction {
    Identity,
    Z,
    X,
    /// `σ^z σ^x`
    ZX,
}

impl Correction {
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        match self {
            Correction::Identity => [[ONE, ZERO], [ZERO, ONE]],
            Correction::Z => [[ONE, ZERO], [ZERO, -ONE]],
            Correction::X => [[ZERO, ONE], [ONE, ZERO]],
            Correction::ZX => [[ZERO, ONE], [-ONE, ZERO]],
        }
    }
}

/// `S_k`: the correction table Bob uses when the channel is taken to be the
/// Bell state `k`. Outcome `k` always maps to the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrectionSet(pub BellState);

impl CorrectionSet {
    pub const ALL: [CorrectionSet; 4] = [
        CorrectionSet(BellState::PhiPlus),
        CorrectionSet(BellState::PhiMinus),
        CorrectionSet(BellState::PsiPlus),
        CorrectionSet(BellState::PsiMinus),
    ];

    pub fn resource(self) -> BellState {
        self.0
    }

    pub fn unitary(self, outcome: BellState) -> Correction {
        use BellState::*;
        use Correction::*;
        // rows: resource k; columns: outcome Φ⁺, Φ⁻, Ψ⁺, Ψ⁻
        let row = match self.0 {
            PhiPlus => [Identity, Z, X, ZX],
            PhiMinus => [Z, Identity, ZX, X],
            PsiPlus => [X, ZX, Identity, Z],
            PsiMinus => [ZX, X, Z, Identity],
        };
        row[outcome as usize]
    }
}

impl fmt::Display for CorrectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S[{}]", self.0)
    }
}

/// Normalized single-qubit pure state `α|0> + β|1>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureQubit {
    alpha: Complex64,
    beta: Complex64,
}

impl PureQubit {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("pure qubit has squared norm {n}")));
        }
        Ok(PureQubit { alpha, beta })
    }

    /// `cos(θ/2)|0> + e^{iφ} sin(θ/2)|1>`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        PureQubit {
            alpha: Complex64::new((theta / 2.0).cos(), 0.0),
            beta: Complex64::from_polar((theta / 2.0).sin(), phi),
        }
    }

    /// The six eigenstates of `σ^x`, `σ^y`, `σ^z` as `(θ, φ)` pairs.
    pub fn axis_poles() -> [(f64, f64); 6] {
        [(0.0, 0.0), (PI, 0.0), (PI / 2.0, 0.0), (PI / 2.0, PI), (PI / 2.0, PI / 2.0), (PI / 2.0, 1.5 * PI)]
    }

    pub fn zero() -> Self {
        Self::from_angles(0.0, 0.0)
    }

    pub fn one() -> Self {
        PureQubit { alpha: ZERO, beta: ONE }
    }

    pub fn plus() -> Self {
        PureQubit { alpha: Complex64::new(FRAC_1_SQRT_2, 0.0), beta: Complex64::new(FRAC_1_SQRT_2, 0.0) }
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        [self.alpha, self.beta]
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::pure(&self.amplitudes()).expect("normalized by construction")
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        let c = self.alpha.conj() * self.beta;
        [2.0 * c.re, 2.0 * c.im, self.alpha.norm_sqr() - self.beta.norm_sqr()]
    }
}

/// `ρ = ρ₁ ⊗ ρ₂₃`.
pub fn joint_input(rho1: &DensityMatrix, rho23: &DensityMatrix) -> Result<DensityMatrix> {
    if rho1.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: rho1.dim() });
    }
    if rho23.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho23.dim() });
    }
    Ok(rho1.kron(rho23))
}

fn check_joint(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 8 {
        return Err(Error::DimensionMismatch { expected: 8, found: rho.dim() });
    }
    Ok(())
}

/// `Tr₁₂[P_j ρ P_j]`, unnormalized.
fn branch_state(rho: &DensityMatrix, outcome: BellState) -> [[Complex64; 2]; 2] {
    let b = outcome.amplitudes();
    let mut m = [[ZERO; 2]; 2];
    for (c, row) in m.iter_mut().enumerate() {
        for (d, entry) in row.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (p, &bp) in b.iter().enumerate() {
                if bp == 0.0 {
                    continue;
                }
                for (q, &bq) in b.iter().enumerate() {
                    if bq == 0.0 {
                        continue;
                    }
                    acc += rho.get(2 * p + c, 2 * q + d) * (bp * bq);
                }
            }
            *entry = acc;
        }
    }
    m
}

/// `Q_j = Tr[P_j ρ]` with `P_j` acting on qubits 1 and 2.
pub fn outcome_probability(rho: &DensityMatrix, outcome: BellState) -> Result<f64> {
    check_joint(rho)?;
    let m = branch_state(rho, outcome);
    Ok((m[0][0] + m[1][1]).re)
}

fn conjugate(u: [[Complex64; 2]; 2], m: [[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in 0..2 {
                for l in 0..2 {
                    acc += u[i][k] * m[k][l] * u[j][l].conj();
                }
            }
            *entry = acc;
        }
    }
    out
}

fn corrected_branch(rho: &DensityMatrix, outcome: BellState, set: CorrectionSet) -> ([[Complex64; 2]; 2], f64) {
    let m = branch_state(rho, outcome);
    let q = (m[0][0] + m[1][1]).re;
    (conjugate(set.unitary(outcome).matrix(), m), q)
}

/// Bob's qubit after outcome `j` and correction from `S_k`:
/// `U_j Tr₁₂[P_j ρ P_j] U_j† / Q_j`.
pub fn bob_output(rho: &DensityMatrix, outcome: BellState, set: CorrectionSet) -> Result<DensityMatrix> {
    check_joint(rho)?;
    let (m, q) = corrected_branch(rho, outcome, set);
    if q <= MIN_OUTCOME_PROBABILITY {
        return Err(Error::OutcomeImpossible { outcome: outcome.name(), probability: q });
    }
    Ok(DensityMatrix::from_mat_unchecked(Mat::from_fn(2, 2, |i, j| m[i][j] / q)))
}

/// Trace distance between single-qubit states: half the Euclidean distance
/// of their Bloch vectors.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let (ra, rb) = (a.bloch_vector()?, b.bloch_vector()?);
    Ok(0.5 * ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `Σ_j Q_j D(ρ₁, ρ_{B_j})` for correction set `S_k`.
pub fn mean_trace_distance(rho1: &DensityMatrix, rho23: &DensityMatrix, set: CorrectionSet) -> Result<f64> {
    let rho = joint_input(rho1, rho23)?;
    let r1 = rho1.bloch_vector()?;
    let mut total = 0.0;
    for outcome in BellState::ALL {
        let (m, q) = corrected_branch(&rho, outcome, set);
        if q <= MIN_OUTCOME_PROBABILITY {
            continue;
        }
        // Bloch vector of m / q, scaled by q: D_j Q_j = |q r1 - r(m)| / 2
        let rm = [2.0 * m[1][0].re, 2.0 * m[1][0].im, (m[0][0] - m[1][1]).re];
        let d2: f64 = (0..3).map(|a| (q * r1[a] - rm[a]).powi(2)).sum();
        total += 0.5 * d2.sqrt();
    }
    Ok(total)
}

/// Result of optimizing over the four correction sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InternalDetection {
    pub value: f64,
    pub set: CorrectionSet,
    /// Another set attains the optimum within [`TIE_TOL`].
    pub tie: bool,
    pub per_set: [f64; 4],
}

/// `D̄_int = min_k Σ_j Q_j D(ρ₁, ρ_{B_j}(S_k))`.
pub fn internal_detector(rho1: &DensityMatrix, rho23: &DensityMatrix) -> Result<InternalDetection> {
    let mut per_set = [0.0; 4];
    for (slot, set) in per_set.iter_mut().zip(CorrectionSet::ALL) {
        *slot = mean_trace_distance(rho1, rho23, set)?;
    }
    let (best, tie) = pick(&per_set, |a, b| a < b);
    Ok(InternalDetection { value: per_set[best], set: CorrectionSet::ALL[best], tie, per_set })
}

/// Index of the optimum (first on ties) and whether it is tied.
fn pick(values: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, bool) {
    let mut best = 0;
    for k in 1..values.len() {
        if better(values[k], values[best]) && (values[k] - values[best]).abs() > TIE_TOL {
            best = k;
        }
    }
    let tie = values.iter().enumerate().any(|(k, &v)| k != best && (v - values[best]).abs() <= TIE_TOL);
    (best, tie)
}

/// `<ψ|ρ_B|ψ>`.
pub fn fidelity(psi: &PureQubit, rho_b: &DensityMatrix) -> Result<f64> {
    if rho_b.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: rho_b.dim() });
    }
    let [a, b] = psi.amplitudes();
    let v = a.conj() * (rho_b.get(0, 0) * a + rho_b.get(0, 1) * b) + b.conj() * (rho_b.get(1, 0) * a + rho_b.get(1, 1) * b);
    Ok(v.re)
}

/// `Σ_j Q_j F_j(|ψ>, S_k)` with `ρ₁ = |ψ><ψ|`.
pub fn mean_fidelity(psi: &PureQubit, rho23: &DensityMatrix, set: CorrectionSet) -> Result<f64> {
    let rho = joint_input(&psi.density(), rho23)?;
    let [a, b] = psi.amplitudes();
    let mut total = 0.0;
    for outcome in BellState::ALL {
        let (m, q) = corrected_branch(&rho, outcome, set);
        if q <= MIN_OUTCOME_PROBABILITY {
            continue;
        }
        // Q_j F_j = <ψ| U_j M_j U_j† |ψ>
        let v = a.conj() * (m[0][0] * a + m[0][1] * b) + b.conj() * (m[1][0] * a + m[1][1] * b);
        total += v.re;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExternalDetection {
    pub value: f64,
    pub set: CorrectionSet,
    /// Input state attaining the maximum.
    pub input: PureQubit,
    pub tie: bool,
    pub per_set: [f64; 4],
}

/// Maximum of [`mean_fidelity`] over one correction set and all pure inputs:
/// exact axis poles, a coarse Bloch-sphere grid, then a shrinking pattern
/// search down to [`ANGLE_RESOLUTION`].
fn maximize_over_inputs(rho23: &DensityMatrix, set: CorrectionSet) -> Result<(f64, f64, f64)> {
    let eval = |theta: f64, phi: f64| mean_fidelity(&PureQubit::from_angles(theta, phi), rho23, set);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for (theta, phi) in PureQubit::axis_poles() {
        let v = eval(theta, phi)?;
        if v > best.0 {
            best = (v, theta, phi);
        }
    }
    const THETA_STEPS: usize = 12;
    const PHI_STEPS: usize = 24;
    for i in 1..THETA_STEPS {
        let theta = PI * i as f64 / THETA_STEPS as f64;
        for j in 0..PHI_STEPS {
            let phi = 2.0 * PI * j as f64 / PHI_STEPS as f64;
            let v = eval(theta, phi)?;
            if v > best.0 + TIE_TOL {
                best = (v, theta, phi);
            }
        }
    }
    let mut step = PI / THETA_STEPS as f64 / 2.0;
    while step >= ANGLE_RESOLUTION {
        let (_, t0, p0) = best;
        let mut moved = false;
        for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = eval(t0 + dt, p0 + dp)?;
            if v > best.0 + f64::EPSILON {
                best = (v, t0 + dt, p0 + dp);
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    Ok(best)
}

/// `F̄_ext = max_{ψ, k} F̄(|ψ>, S_k)`.
pub fn external_detector(rho23: &DensityMatrix) -> Result<ExternalDetection> {
    if rho23.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho23.dim() });
    }
    let mut per_set = [0.0; 4];
    let mut inputs = [PureQubit::zero(); 4];
    for (k, set) in CorrectionSet::ALL.into_iter().enumerate() {
        let (v, theta, phi) = maximize_over_inputs(rho23, set)?;
        per_set[k] = v;
        inputs[k] = PureQubit::from_angles(theta, phi);
    }
    let (best, tie) = pick(&per_set, |a, b| a > b);
    Ok(ExternalDetection { value: per_set[best], set: CorrectionSet::ALL[best], input: inputs[best], tie, per_set })
}

/// `(1/4)[(2 - |z² + zz|)|z| + |z³ - z·zz|]`.
pub fn internal_closed_form(c: &CorrelatorSet) -> f64 {
    let z = c.z;
    0.25 * ((2.0 - (z * z + c.zz).abs()) * z.abs() + (z * z * z - z * c.zz).abs())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormFidelity {
    pub value: f64,
    /// Correlator `ss` attaining the maximum of `(1 + |ss|)/2`.
    pub branch: Axis,
    pub tie: bool,
}

/// `max[(1+|xx|)/2, (1+|yy|)/2, (1+|zz|)/2]`.
pub fn external_closed_form(c: &CorrelatorSet) -> ClosedFormFidelity {
    let v = [c.xx.abs(), c.yy.abs(), c.zz.abs()];
    let (best, tie) = pick(&v, |a, b| a > b);
    ClosedFormFidelity { value: 0.5 * (1.0 + v[best]), branch: Axis::ALL[best], tie }
}

/// Signs of `z² + zz` and `z³ - z·zz`, the arguments of the two absolute
/// values in the internal closed form. A sign change of either produces a
/// kink that is not a critical point. Values within [`KINK_TOL`] of zero map to 0.
pub fn internal_kink_signs(c: &CorrelatorSet) -> [i8; 2] {
    let sign = |s: f64| {
        if s > KINK_TOL {
            1
        } else if s < -KINK_TOL {
            -1
        } else {
            0
        }
    };
    [sign(c.z * c.z + c.zz), sign(c.z * c.z * c.z - c.z * c.zz)]
}
