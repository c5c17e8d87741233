//! Green-function kernels and the coherent (Ω) / dissipative (Γ) coupling
//! tensors between every pair of atomic transitions.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Ensemble;

/// Below this argument `P_I` and `Q_I` are evaluated from their Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-2;

/// The four scalar kernels at `ξ = k₀r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValues {
    pub p_r: f64,
    pub p_i: f64,
    pub q_r: f64,
    pub q_i: f64,
}

/// Closed-form kernels without the small-argument series.
pub fn kernels_direct(xi: f64) -> KernelValues {
    let (s, c) = xi.sin_cos();
    let x2 = xi * xi;
    let x3 = x2 * xi;
    KernelValues {
        p_r: c / xi - s / x2 - c / x3,
        p_i: s / xi + c / x2 - s / x3,
        q_r: c / xi - 3.0 * s / x2 - 3.0 * c / x3,
        q_i: s / xi + 3.0 * c / x2 - 3.0 * s / x3,
    }
}

/// Kernels at `ξ > 0`. The imaginary-part kernels switch to their series
/// below [`SERIES_THRESHOLD`]; the real parts are dominated by `1/ξ³` there and
/// need no special treatment.
pub fn kernels(xi: f64) -> Result<KernelValues> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel argument must be positive, got {xi}")));
    }
    let mut k = kernels_direct(xi);
    if xi < SERIES_THRESHOLD {
        let x2 = xi * xi;
        k.p_i = 2.0 / 3.0 + x2 * (-2.0 / 15.0 + x2 * (1.0 / 140.0 - x2 / 5670.0));
        k.q_i = x2 * (-1.0 / 15.0 + x2 * (1.0 / 210.0 - x2 / 7560.0));
    }
    Ok(k)
}

/// Ω and Γ indexed by `(atom, transition)` pairs, in units of Γ_ref.
///
/// Entries are stored as a dense `(N·T) × (N·T)` row-major table; the
/// diagonal atom blocks of Ω are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTensors {
    n_atoms: usize,
    n_transitions: usize,
    omega: Vec<f64>,
    gamma: Vec<f64>,
}

impl CouplingTensors {
    /// Builds tensors from raw `(N·T)²` row-major tables.
    pub fn from_parts(
        n_atoms: usize,
        n_transitions: usize,
        omega: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let len = (n_atoms * n_transitions).pow(2);
        for table in [&omega, &gamma] {
            if table.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    found: table.len(),
                });
            }
        }
        Ok(Self {
            n_atoms,
            n_transitions,
            omega,
            gamma,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_transitions(&self) -> usize {
        self.n_transitions
    }

    /// Number of `(atom, transition)` channels, N·T.
    pub fn n_channels(&self) -> usize {
        self.n_atoms * self.n_transitions
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, jp: usize) -> usize {
        (i * self.n_transitions + j) * self.n_channels() + k * self.n_transitions + jp
    }

    pub fn omega(&self, i: usize, j: usize, k: usize, jp: usize) -> f64 {
        self.omega[self.idx(i, j, k, jp)]
    }

    pub fn gamma(&self, i: usize, j: usize, k: usize, jp: usize) -> f64 {
        self.gamma[self.idx(i, j, k, jp)]
    }

    /// Γ as an `(N·T) × (N·T)` matrix with channel index `i·T + j`.
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        let n = self.n_channels();
        DMatrix::from_row_slice(n, n, &self.gamma)
    }

    pub fn omega_matrix(&self) -> DMatrix<f64> {
        let n = self.n_channels();
        DMatrix::from_row_slice(n, n, &self.omega)
    }

    /// Same tensors with every Γ entry set to zero.
    pub fn without_dissipation(&self) -> Self {
        Self {
            gamma: vec![0.0; self.gamma.len()],
            ..self.clone()
        }
    }
}

fn check_indices(ensemble: &Ensemble, i: usize, j: usize, k: usize, jp: usize) -> Result<()> {
    let n = ensemble.n_atoms();
    let t = ensemble.n_transitions();
    if i >= n || k >= n || j >= t || jp >= t {
        return Err(Error::IndexOutOfRange(format!(
            "({i}, {j}; {k}, {jp}) for {n} atoms with {t} transitions"
        )));
    }
    Ok(())
}

/// Shared geometric factors of Ω and Γ for `i ≠ k`:
/// `(3√(γ_j γ_j′)/2, μ̂·μ̂′, (μ̂·r̂)(μ̂′·r̂), k₀r)`.
fn pair_factors(ensemble: &Ensemble, i: usize, j: usize, k: usize, jp: usize) -> Result<(f64, f64, f64, f64)> {
    let a = &ensemble.atoms[i];
    let b = &ensemble.atoms[k];
    let sep = b.position - a.position;
    let r = sep.norm();
    if r <= 0.0 {
        return Err(Error::CoincidentAtoms { i, k });
    }
    let r_hat = sep / r;
    let (ta, tb) = (&a.transitions[j], &b.transitions[jp]);
    let prefactor = 1.5 * (ta.rate * tb.rate).sqrt();
    let parallel = ta.dipole.dot(&tb.dipole);
    let projected = ta.dipole.dot(&r_hat) * tb.dipole.dot(&r_hat);
    let omega0 = 0.5 * (ta.frequency + tb.frequency);
    let k0 = TAU / ensemble.reference_wavelength * omega0;
    Ok((prefactor, parallel, projected, k0 * r))
}

/// Γ^{ik}_{jj′}; on the atom diagonal this is `γ_j δ_{jj′}`.
pub fn gamma_coupling(ensemble: &Ensemble, i: usize, j: usize, k: usize, jp: usize) -> Result<f64> {
    check_indices(ensemble, i, j, k, jp)?;
    if i == k {
        return Ok(if j == jp { ensemble.atoms[i].transitions[j].rate } else { 0.0 });
    }
    let (pre, par, proj, xi) = pair_factors(ensemble, i, j, k, jp)?;
    let kv = kernels(xi)?;
    Ok(pre * (par * kv.p_i - proj * kv.q_i))
}

/// Ω^{ik}_{jj′} for `i ≠ k`.
pub fn omega_coupling(ensemble: &Ensemble, i: usize, j: usize, k: usize, jp: usize) -> Result<f64> {
    check_indices(ensemble, i, j, k, jp)?;
    if i == k {
        return Err(Error::InvalidArgument(
            "no coherent self-coupling within one atom".into(),
        ));
    }
    let (pre, par, proj, xi) = pair_factors(ensemble, i, j, k, jp)?;
    let kv = kernels(xi)?;
    Ok(pre * (par * kv.p_r - proj * kv.q_r))
}

/// Assembles every Ω and Γ entry of the ensemble.
pub fn coupling_tensors(ensemble: &Ensemble) -> Result<CouplingTensors> {
    let n = ensemble.n_atoms();
    let t = ensemble.n_transitions();
    let c = n * t;
    let mut omega = vec![0.0; c * c];
    let mut gamma = vec![0.0; c * c];
    for i in 0..n {
        for k in 0..n {
            for j in 0..t {
                for jp in 0..t {
                    let at = (i * t + j) * c + k * t + jp;
                    gamma[at] = gamma_coupling(ensemble, i, j, k, jp)?;
                    if i != k {
                        omega[at] = omega_coupling(ensemble, i, j, k, jp)?;
                    }
                }
            }
        }
    }
    CouplingTensors::from_parts(n, t, omega, gamma)
}
