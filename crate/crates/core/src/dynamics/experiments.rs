use std::f64::consts::TAU;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evolve, evolve_segments, IntegratorConfig, Probe, Segment, Trajectory};
use crate::couplings::{coupling_tensors, CouplingTensors};
use crate::error::{Error, Result};
use crate::geometry::Ensemble;
use crate::hilbert::{
    hamiltonian, pump_hamiltonian, CMatrix, CVector, DensityMatrix, Dissipator, Frame,
    LindbladConvention, ManifoldBasis, PumpConfig, C64,
};
use crate::spectral::{dark_state, superradiant_state};

/// Everything needed to integrate one ensemble: basis, couplings,
/// rotating-frame Hamiltonian and dissipator.
pub struct Setup {
    pub ensemble: Ensemble,
    pub basis: ManifoldBasis,
    pub tensors: CouplingTensors,
    pub hamiltonian: CMatrix,
    pub dissipator: Dissipator,
    pub convention: LindbladConvention,
}

impl Setup {
    pub fn new(ensemble: Ensemble, convention: LindbladConvention, cap: usize) -> Result<Self> {
        let basis = ManifoldBasis::for_ensemble(&ensemble, cap)?;
        let tensors = coupling_tensors(&ensemble)?;
        Self::from_tensors(ensemble, basis, tensors, convention)
    }

    /// Uses the given tensors instead of computing them from the geometry.
    pub fn from_tensors(
        ensemble: Ensemble,
        basis: ManifoldBasis,
        tensors: CouplingTensors,
        convention: LindbladConvention,
    ) -> Result<Self> {
        let hamiltonian = hamiltonian(&basis, &ensemble, &tensors, Frame::Rotating)?;
        let dissipator = Dissipator::new(&basis, &tensors, convention)?;
        Ok(Self {
            ensemble,
            basis,
            tensors,
            hamiltonian,
            dissipator,
            convention,
        })
    }

    pub fn ground_state(&self) -> CVector {
        let mut v = CVector::zeros(self.basis.dim());
        v[0] = C64::new(1.0, 0.0);
        v
    }

    /// Rotating-frame Hamiltonian plus the pump.
    pub fn driven_hamiltonian(&self, pump: &PumpConfig) -> Result<CMatrix> {
        Ok(&self.hamiltonian + pump_hamiltonian(&self.basis, pump)?)
    }
}

/// Initial states of the decay experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Dark,
    Superradiant,
    /// `(|e₁e₂⟩ − |e₂e₁⟩)/√2 ⊗ |g⟩`.
    ProductUnpolarized,
    /// `(|e₁e₂⟩ − |e₂e₁⟩)/√2 ⊗ |e₁⟩`.
    TripleExcited,
    Custom(CVector),
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dark" => Ok(Self::Dark),
            "superradiant" => Ok(Self::Superradiant),
            "product-unpolarized" => Ok(Self::ProductUnpolarized),
            "triple-excited" => Ok(Self::TripleExcited),
            other => Err(Error::UnknownState(other.to_string())),
        }
    }
}

impl InitialState {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dark => "dark",
            Self::Superradiant => "superradiant",
            Self::ProductUnpolarized => "product-unpolarized",
            Self::TripleExcited => "triple-excited",
            Self::Custom(_) => "custom",
        }
    }

    pub fn build(&self, basis: &ManifoldBasis) -> Result<CVector> {
        let singlet = |third: usize| -> Result<CVector> {
            if basis.n_atoms() != 3 || basis.n_levels() < 3 {
                return Err(Error::InvalidArgument(
                    "entangled-pair states need three atoms with two excited levels".into(),
                ));
            }
            let a = basis.product_state(&[1, 2, third])?;
            let b = basis.product_state(&[2, 1, third])?;
            Ok((a - b) / C64::new(2f64.sqrt(), 0.0))
        };
        match self {
            Self::Dark => dark_state(basis),
            Self::Superradiant => superradiant_state(basis),
            Self::ProductUnpolarized => singlet(0),
            Self::TripleExcited => singlet(1),
            Self::Custom(v) => {
                if v.len() != basis.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: basis.dim(),
                        found: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }
}

/// Free decay from a named state: records its fidelity and the manifold
/// populations.
pub fn decay_experiment(
    setup: &Setup,
    initial: &InitialState,
    t_final: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let psi = initial.build(&setup.basis)?;
    let rho0 = DensityMatrix::pure(&psi)?;
    let probe = Probe::new().target("fidelity", psi).manifolds(&setup.basis);
    evolve(&rho0, &setup.hamiltonian, &setup.dissipator, t_final, config, &probe)
}

/// Purely dissipative decay from the fully inverted state `|e₁ e₂ e₁ …⟩`,
/// tracking the dark, superradiant, ground and initial-state fractions.
pub fn dissipative_preparation(setup: &Setup, t_final: f64, config: &IntegratorConfig) -> Result<Trajectory> {
    let b = &setup.basis;
    if b.n_levels() < 3 {
        return Err(Error::InvalidArgument("need two excited levels per atom".into()));
    }
    let levels: Vec<usize> = (0..b.n_atoms()).map(|i| 1 + i % 2).collect();
    let initial = b.product_state(&levels)?;
    let probe = Probe::new()
        .target("dark", dark_state(b)?)
        .target("superradiant", superradiant_state(b)?)
        .target("ground", setup.ground_state())
        .target("initial", initial.clone());
    evolve(
        &DensityMatrix::pure(&initial)?,
        &setup.hamiltonian,
        &setup.dissipator,
        t_final,
        config,
        &probe,
    )
}

/// How two sweep phases are distributed over the drive amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpTemplate {
    /// Atom 1 at the reference phase, atoms 2 and 3 at `φ₁` and `φ₂` on both
    /// transitions.
    PerAtom,
    /// `η¹_j = η`, `η²₁ = η e^{iφ₁}`, `η³₁ = η e^{2iφ₁}`, `η²₂ = η³₂ = η e^{2iφ₂}`.
    PerTransition,
}

impl FromStr for PumpTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-atom" => Ok(Self::PerAtom),
            "per-transition" => Ok(Self::PerTransition),
            other => Err(Error::InvalidArgument(format!("unknown pump template `{other}`"))),
        }
    }
}

impl PumpTemplate {
    pub fn name(self) -> &'static str {
        match self {
            Self::PerAtom => "per-atom",
            Self::PerTransition => "per-transition",
        }
    }

    /// Drive amplitudes for three atoms with two transitions; the reference
    /// phase is added to atom 1 only.
    pub fn pump(self, eta: f64, phases: [f64; 2], reference_phase: f64) -> PumpConfig {
        let e = |phi: f64| C64::from_polar(eta, phi);
        let [p1, p2] = phases;
        let eta = match self {
            Self::PerAtom => vec![
                vec![e(reference_phase); 2],
                vec![e(p1); 2],
                vec![e(p2); 2],
            ],
            Self::PerTransition => vec![
                vec![e(reference_phase); 2],
                vec![e(p1), e(2.0 * p2)],
                vec![e(2.0 * p1), e(2.0 * p2)],
            ],
        };
        PumpConfig { eta, detuning: 0.0 }
    }
}

/// A phase-controlled drive applied from the ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub template: PumpTemplate,
    /// Drive amplitude in units of Γ_ref.
    pub eta: f64,
    pub duration: f64,
    pub target: CVector,
}

impl Drive {
    fn check(&self, setup: &Setup) -> Result<()> {
        if setup.basis.n_atoms() != 3 || setup.basis.n_transitions() != 2 {
            return Err(Error::InvalidArgument(
                "phase templates are defined for three atoms with two transitions".into(),
            ));
        }
        if !(self.eta.is_finite() && self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidArgument("drive needs finite η and positive duration".into()));
        }
        if self.target.len() != setup.basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: setup.basis.dim(),
                found: self.target.len(),
            });
        }
        Ok(())
    }
}

/// Target fidelity after driving `|g…g⟩` for `drive.duration`.
pub fn preparation_probability(
    setup: &Setup,
    drive: &Drive,
    phases: [f64; 2],
    reference_phase: f64,
    config: &IntegratorConfig,
) -> Result<f64> {
    drive.check(setup)?;
    let h = setup.driven_hamiltonian(&drive.template.pump(drive.eta, phases, reference_phase))?;
    let rho0 = DensityMatrix::pure(&setup.ground_state())?;
    let cfg = IntegratorConfig {
        sample_interval: None,
        ..config.clone()
    };
    let probe = Probe::new().target("target", drive.target.clone());
    let traj = evolve(&rho0, &h, &setup.dissipator, drive.duration, &cfg, &probe)?;
    Ok(traj.last("target").expect("target is probed"))
}

/// `n` evenly spaced points over `[0, 2π]`, both ends included.
pub fn phase_axis(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n).map(|k| TAU * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub template: PumpTemplate,
    pub eta: f64,
    pub duration: f64,
    pub convention: LindbladConvention,
    pub dt: f64,
}

/// Preparation probability over a `φ₁ × φ₂` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    /// Row-major: `values[i1 * phi2.len() + i2]`.
    pub values: Vec<f64>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.phi2.len() + i2]
    }

    /// `(φ₁, φ₂, value)` of the largest entry; the first one on ties.
    pub fn max(&self) -> (f64, f64, f64) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        let n2 = self.phi2.len();
        (self.phi1[best / n2], self.phi2[best % n2], self.values[best])
    }

    /// Value at the grid point nearest to the given phases.
    pub fn nearest(&self, phi1: f64, phi2: f64) -> f64 {
        let idx = |axis: &[f64], x: f64| {
            (0..axis.len())
                .min_by(|&a, &b| (axis[a] - x).abs().total_cmp(&(axis[b] - x).abs()))
                .unwrap_or(0)
        };
        self.value(idx(&self.phi1, phi1), idx(&self.phi2, phi2))
    }

    /// CSV rows `phi1,phi2,value` in grid order.
    pub fn to_csv(&self, header: &str) -> String {
        use std::fmt::Write as _;
        let mut s = String::from(header);
        s.push_str("phi1,phi2,value\n");
        for (i1, p1) in self.phi1.iter().enumerate() {
            for (i2, p2) in self.phi2.iter().enumerate() {
                let _ = writeln!(s, "{p1:.16e},{p2:.16e},{:.16e}", self.value(i1, i2));
            }
        }
        s
    }
}

/// Evaluates [`preparation_probability`] on every grid point in parallel;
/// results are stored in grid order.
pub fn pump_sweep(
    setup: &Setup,
    drive: &Drive,
    phi1: &[f64],
    phi2: &[f64],
    config: &IntegratorConfig,
) -> Result<SweepResult> {
    if phi1.len() < 2 || phi2.len() < 2 {
        return Err(Error::InvalidArgument("sweep axes need at least two points".into()));
    }
    drive.check(setup)?;
    let n2 = phi2.len();
    let values = (0..phi1.len() * n2)
        .into_par_iter()
        .map(|k| preparation_probability(setup, drive, [phi1[k / n2], phi2[k % n2]], 0.0, config))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SweepResult {
        phi1: phi1.to_vec(),
        phi2: phi2.to_vec(),
        values,
        metadata: SweepMetadata {
            template: drive.template,
            eta: drive.eta,
            duration: drive.duration,
            convention: setup.convention,
            dt: config.dt,
        },
    })
}

/// Target fidelity versus time under a continuous drive and under a drive
/// switched off after `pulse_duration`. Both share the sample grid, so they
/// agree exactly up to the switch-off.
pub fn pulsed_vs_continuous(
    setup: &Setup,
    pump: &PumpConfig,
    pulse_duration: f64,
    t_final: f64,
    target: &CVector,
    config: &IntegratorConfig,
) -> Result<(Trajectory, Trajectory)> {
    if !(pulse_duration > 0.0 && pulse_duration < t_final) {
        return Err(Error::InvalidArgument(format!(
            "pulse duration {pulse_duration} must lie in (0, {t_final})"
        )));
    }
    let driven = setup.driven_hamiltonian(pump)?;
    let rho0 = DensityMatrix::pure(&setup.ground_state())?;
    let probe = Probe::new().target("target", target.clone()).manifolds(&setup.basis);
    let first = Segment {
        duration: pulse_duration,
        hamiltonian: &driven,
    };
    let rest = t_final - pulse_duration;
    let continuous = evolve_segments(
        &rho0,
        &[first, Segment { duration: rest, hamiltonian: &driven }],
        &setup.dissipator,
        config,
        &probe,
    )?;
    let pulsed = evolve_segments(
        &rho0,
        &[first, Segment { duration: rest, hamiltonian: &setup.hamiltonian }],
        &setup.dissipator,
        config,
        &probe,
    )?;
    Ok((continuous, pulsed))
}

/// Local maxima of a sampled series, in time order.
pub fn peaks(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .map(|k| (times[k], values[k]))
        .collect()
}
