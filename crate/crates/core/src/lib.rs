//! Teleportation-based detection of quantum critical points in finite,
//! thermal spin-1/2 chains.
//!
//! The pipeline is: build a periodic chain Hamiltonian ([`models`]),
//! diagonalize it sector by sector and form the Gibbs state ([`thermal`]),
//! take one- and two-site reduced states, run the mixed-state teleportation
//! protocol or its correlator closed forms ([`teleport`]), and finally sweep a
//! tuning parameter to locate derivative extrema and extrapolate them to zero
//! temperature ([`scan`]).
//!
//! Basis convention: site 1 is the most significant bit of a basis index, and
//! bit value 0 is spin up (`σ^z = +1`).

pub mod error;
pub mod models;
pub mod operator;
pub mod scan;
pub mod teleport;
pub mod thermal;

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use models::{build_hamiltonian, symmetry_sectors, ModelFamily, ModelSpec, SectorLabel, SymmetrySectorPlan, TuningParameter};
pub use operator::{expectation, partial_trace, site_operator, Axis, DensityMatrix, HermitianOperator, PauliString, SiteIndex};
pub use thermal::{gibbs_state, CorrelatorSet, Spectrum, ThermalState};
