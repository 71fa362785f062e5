//! Periodic XXZ and XY-in-transverse-field chain Hamiltonians and their
//! conserved-quantity sectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Axis, HermitianOperator, PauliString, SiteIndex, MAX_SITES};

/// Coupling constants of a model family.
///
/// * `Xxz`: `H = Σ_j (σ^x_j σ^x_{j+1} + σ^y_j σ^y_{j+1} + Δ σ^z_j σ^z_{j+1} - (h/2) σ^z_j)`
/// * `XyTransverse`: `H = -(λ/4) Σ_j [(1+γ) σ^x_j σ^x_{j+1} + (1-γ) σ^y_j σ^y_{j+1}] - (1/2) Σ_j σ^z_j`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFamily {
    Xxz { delta: f64, field: f64 },
    XyTransverse { lambda: f64, gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuningParameter {
    Delta,
    Lambda,
    Gamma,
}

impl TuningParameter {
    pub fn name(self) -> &'static str {
        match self {
            TuningParameter::Delta => "delta",
            TuningParameter::Lambda => "lambda",
            TuningParameter::Gamma => "gamma",
        }
    }
}

impl fmt::Display for TuningParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    family: ModelFamily,
    len: usize,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, len: usize) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&len) {
            return Err(Error::arg(format!("chain length must be in 2..={MAX_SITES}, got {len}")));
        }
        let finite = match family {
            ModelFamily::Xxz { delta, field } => delta.is_finite() && field.is_finite(),
            ModelFamily::XyTransverse { lambda, gamma } => lambda.is_finite() && gamma.is_finite(),
        };
        if !finite {
            return Err(Error::arg(format!("couplings must be finite: {family:?}")));
        }
        Ok(ModelSpec { family, len })
    }

    pub fn xxz(delta: f64, field: f64, len: usize) -> Result<Self> {
        Self::new(ModelFamily::Xxz { delta, field }, len)
    }

    pub fn xy(lambda: f64, gamma: f64, len: usize) -> Result<Self> {
        Self::new(ModelFamily::XyTransverse { lambda, gamma }, len)
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn with_len(&self, len: usize) -> Result<Self> {
        Self::new(self.family, len)
    }

    pub fn parameter(&self, p: TuningParameter) -> Result<f64> {
        match (self.family, p) {
            (ModelFamily::Xxz { delta, .. }, TuningParameter::Delta) => Ok(delta),
            (ModelFamily::XyTransverse { lambda, .. }, TuningParameter::Lambda) => Ok(lambda),
            (ModelFamily::XyTransverse { gamma, .. }, TuningParameter::Gamma) => Ok(gamma),
            _ => Err(Error::arg(format!("{p} is not a parameter of {}", self.family_name()))),
        }
    }

    /// Copy with the tuning parameter `p` set to `value`.
    pub fn with_parameter(&self, p: TuningParameter, value: f64) -> Result<Self> {
        let family = match (self.family, p) {
            (ModelFamily::Xxz { field, .. }, TuningParameter::Delta) => ModelFamily::Xxz { delta: value, field },
            (ModelFamily::XyTransverse { gamma, .. }, TuningParameter::Lambda) => {
                ModelFamily::XyTransverse { lambda: value, gamma }
            }
            (ModelFamily::XyTransverse { lambda, .. }, TuningParameter::Gamma) => {
                ModelFamily::XyTransverse { lambda, gamma: value }
            }
            _ => return Err(Error::arg(format!("{p} is not a parameter of {}", self.family_name()))),
        };
        Self::new(family, self.len)
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            ModelFamily::Xxz { .. } => "xxz",
            ModelFamily::XyTransverse { .. } => "xy_transverse",
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            ModelFamily::Xxz { delta, field } => write!(f, "xxz(delta={delta}, h={field}, L={})", self.len),
            ModelFamily::XyTransverse { lambda, gamma } => {
                write!(f, "xy(lambda={lambda}, gamma={gamma}, L={})", self.len)
            }
        }
    }
}

fn bond(len: usize, j: usize, axis: Axis) -> PauliString {
    let k = SiteIndex::periodic(j + 1, len).get();
    PauliString::new(len, [(j, axis), (k, axis)]).expect("bond sites are in range and distinct for L >= 2")
}

fn site(len: usize, j: usize, axis: Axis) -> PauliString {
    PauliString::new(len, [(j, axis)]).expect("site in range")
}

/// Literal periodic sum over `j = 1..=L`; for `L = 2` the single bond is
/// therefore counted twice.
pub fn build_hamiltonian(spec: &ModelSpec) -> HermitianOperator {
    let len = spec.len;
    let mut terms: Vec<(f64, PauliString)> = Vec::with_capacity(4 * len);
    match spec.family {
        ModelFamily::Xxz { delta, field } => {
            for j in 1..=len {
                terms.push((1.0, bond(len, j, Axis::X)));
                terms.push((1.0, bond(len, j, Axis::Y)));
                terms.push((delta, bond(len, j, Axis::Z)));
                terms.push((-field / 2.0, site(len, j, Axis::Z)));
            }
        }
        ModelFamily::XyTransverse { lambda, gamma } => {
            for j in 1..=len {
                terms.push((-lambda / 4.0 * (1.0 + gamma), bond(len, j, Axis::X)));
                terms.push((-lambda / 4.0 * (1.0 - gamma), bond(len, j, Axis::Y)));
                terms.push((-0.5, site(len, j, Axis::Z)));
            }
        }
    }
    HermitianOperator::from_terms(len, terms.iter().map(|(c, p)| (*c, p)))
        .expect("model terms are finite and sized to the chain")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SectorLabel {
    /// No symmetry used: the whole Hilbert space.
    Full,
    /// Eigenvalue of `Σ_j σ^z_j`.
    Magnetization(i32),
    /// Eigenvalue of `Π_j σ^z_j`.
    Parity(i8),
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectorLabel::Full => f.write_str("full"),
            SectorLabel::Magnetization(m) => write!(f, "Sz={m}"),
            SectorLabel::Parity(p) => write!(f, "P={p:+}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sector {
    pub label: SectorLabel,
    /// Ascending computational-basis indices spanning the sector.
    pub basis: Vec<usize>,
}

/// A partition of the `2^L` computational basis into sectors that the
/// Hamiltonian does not connect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetrySectorPlan {
    len: usize,
    sectors: Vec<Sector>,
}

impl SymmetrySectorPlan {
    pub fn unblocked(len: usize) -> Self {
        SymmetrySectorPlan { len, sectors: vec![Sector { label: SectorLabel::Full, basis: (0..1usize << len).collect() }] }
    }

    pub fn magnetization(len: usize) -> Self {
        // bit 0 is spin up, so Σσ^z = L - 2 * popcount
        let mut sectors: Vec<Sector> = (0..=len)
            .rev()
            .map(|ones| Sector { label: SectorLabel::Magnetization(len as i32 - 2 * ones as i32), basis: Vec::new() })
            .collect();
        for i in 0..(1usize << len) {
            let ones = i.count_ones() as usize;
            sectors[len - ones].basis.push(i);
        }
        SymmetrySectorPlan { len, sectors }
    }

    pub fn parity(len: usize) -> Self {
        let mut even = Sector { label: SectorLabel::Parity(1), basis: Vec::new() };
        let mut odd = Sector { label: SectorLabel::Parity(-1), basis: Vec::new() };
        for i in 0..(1usize << len) {
            if i.count_ones() % 2 == 0 {
                even.basis.push(i);
            } else {
                odd.basis.push(i);
            }
        }
        SymmetrySectorPlan { len, sectors: vec![even, odd] }
    }

    pub fn num_sites(&self) -> usize {
        self.len
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.sectors.iter().map(|s| s.basis.len()).collect()
    }

    /// True when every basis index appears in exactly one sector.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; 1 << self.len];
        for s in &self.sectors {
            for &i in &s.basis {
                if i >= seen.len() || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|b| b)
    }

    /// Largest Hamiltonian element connecting two different sectors.
    pub fn off_block_norm(&self, h: &HermitianOperator) -> f64 {
        let blocks: Vec<&[usize]> = self.sectors.iter().map(|s| s.basis.as_slice()).collect();
        h.off_block_norm(&blocks)
    }
}

/// Conserved-quantity sectors: magnetization for XXZ and for the XX point
/// (`γ = 0`), spin-flip parity for anisotropic XY.
pub fn symmetry_sectors(spec: &ModelSpec) -> SymmetrySectorPlan {
    match spec.family {
        ModelFamily::Xxz { .. } => SymmetrySectorPlan::magnetization(spec.len),
        ModelFamily::XyTransverse { gamma, .. } if gamma == 0.0 => SymmetrySectorPlan::magnetization(spec.len),
        ModelFamily::XyTransverse { .. } => SymmetrySectorPlan::parity(spec.len),
    }
}
