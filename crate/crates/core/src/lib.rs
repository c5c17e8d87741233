//! Collective spontaneous emission of dipole-coupled multilevel V-type atoms.
//!
//! Distances are in units of the reference wavelength λ₀, rates and
//! energies in units of the reference single-atom rate Γ, times in 1/Γ.

pub mod couplings;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hilbert;
pub mod spectral;

pub use error::{Error, Result};
