use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subrad_core::dynamics::{IntegratorConfig, OptimizerConfig, PumpTemplate};
use subrad_core::geometry::{
    make_chain, make_dark_chain, make_pair, make_square, make_triangle, make_triangle_uniform, Atom, DipoleScheme,
    Ensemble, Orthogonality,
};
use subrad_core::hilbert::{LindbladConvention, DEFAULT_DIMENSION_CAP};

use crate::CliError;

/// One run: every section is optional here and required by the commands
/// that use it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub couplings: Option<CouplingScan>,
    #[serde(default)]
    pub cascade: CascadeConfig,
    pub lowest_rates: Option<LowestRates>,
    pub evolve: Option<Evolve>,
    pub drive: Option<DriveConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub optimize: OptimizerConfig,
}

/// Builder name plus its parameters. Lengths are in units of λ₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Geometry {
    Pair {
        distance: f64,
        dipoles: DipoleScheme,
    },
    Chain {
        n_atoms: usize,
        spacing: f64,
        dipoles: DipoleScheme,
        #[serde(default)]
        orthogonality: Orthogonality,
    },
    /// N atoms, N − 1 transitions perpendicular to the axis.
    DarkChain { n_atoms: usize, spacing: f64 },
    Triangle { side: f64, c3_symmetric: bool },
    TriangleUniform { side: f64, dipoles: DipoleScheme },
    Square { side: f64, dipoles: DipoleScheme },
    Explicit {
        atoms: Vec<Atom>,
        reference_wavelength: f64,
        #[serde(default)]
        orthogonality: Orthogonality,
    },
}

impl Geometry {
    pub fn build(&self) -> subrad_core::Result<Ensemble> {
        match self {
            Geometry::Pair { distance, dipoles } => make_pair(*distance, dipoles),
            Geometry::Chain {
                n_atoms,
                spacing,
                dipoles,
                orthogonality,
            } => make_chain(*n_atoms, *spacing, dipoles, *orthogonality),
            Geometry::DarkChain { n_atoms, spacing } => make_dark_chain(*n_atoms, *spacing),
            Geometry::Triangle { side, c3_symmetric } => make_triangle(*side, *c3_symmetric),
            Geometry::TriangleUniform { side, dipoles } => make_triangle_uniform(*side, dipoles),
            Geometry::Square { side, dipoles } => make_square(*side, dipoles),
            Geometry::Explicit {
                atoms,
                reference_wavelength,
                orthogonality,
            } => Ensemble::new(atoms.clone(), *reference_wavelength, *orthogonality),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Pair { .. } => "pair",
            Geometry::Chain { .. } => "chain",
            Geometry::DarkChain { .. } => "dark-chain",
            Geometry::Triangle { .. } => "triangle",
            Geometry::TriangleUniform { .. } => "triangle-uniform",
            Geometry::Square { .. } => "square",
            Geometry::Explicit { .. } => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    #[serde(default)]
    pub convention: LindbladConvention,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
    /// Overrides every single-atom rate, in units of Γ_ref.
    pub rate: Option<f64>,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            convention: LindbladConvention::default(),
            dimension_cap: DEFAULT_DIMENSION_CAP,
            rate: None,
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

/// Distance scan in `k₀r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingScan {
    pub k0r_min: f64,
    pub k0r_max: f64,
    pub points: usize,
}

impl CouplingScan {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.points == 0 {
            return Err(CliError::Config("scan needs at least one point".into()));
        }
        if !(self.k0r_min.is_finite() && self.k0r_max.is_finite() && self.k0r_min > 0.0 && self.k0r_max >= self.k0r_min) {
            return Err(CliError::Config(format!(
                "scan range must satisfy 0 < k0r_min <= k0r_max, got [{}, {}]",
                self.k0r_min, self.k0r_max
            )));
        }
        if self.points == 1 {
            return Ok(vec![self.k0r_min]);
        }
        let step = (self.k0r_max - self.k0r_min) / (self.points - 1) as f64;
        Ok((0..self.points).map(|k| self.k0r_min + k as f64 * step).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    /// Edges below this rate are left out of the DOT rendering.
    #[serde(default)]
    pub dot_min_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Configuration {
    Pair,
    Chain3,
    Triangle,
    Chain4,
    Square,
}

impl Configuration {
    pub fn name(self) -> &'static str {
        match self {
            Configuration::Pair => "pair",
            Configuration::Chain3 => "chain3",
            Configuration::Triangle => "triangle",
            Configuration::Chain4 => "chain4",
            Configuration::Square => "square",
        }
    }

    /// N atoms with N − 1 transitions at nearest-neighbour distance `r`.
    pub fn build(self, r: f64) -> subrad_core::Result<Ensemble> {
        match self {
            Configuration::Pair => make_pair(r, &DipoleScheme::Parallel),
            Configuration::Chain3 => make_dark_chain(3, r),
            Configuration::Triangle => make_triangle(r, true),
            Configuration::Chain4 => make_dark_chain(4, r),
            Configuration::Square => make_square(r, &DipoleScheme::Cartesian { transitions: 3 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowestRates {
    pub configurations: Vec<Configuration>,
    pub k0r_min: f64,
    pub k0r_max: f64,
    pub points: usize,
}

impl LowestRates {
    pub fn scan(&self) -> CouplingScan {
        CouplingScan {
            k0r_min: self.k0r_min,
            k0r_max: self.k0r_max,
            points: self.points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Free decay from a named initial state.
    Decay,
    /// Free decay from alternating single excitations.
    DissipativePreparation,
    /// Continuous drive against a drive switched off after its duration.
    Pulsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolve {
    pub experiment: Experiment,
    pub t_final: f64,
    /// Initial state name for `decay`.
    pub initial: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Dark,
    Superradiant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub template: PumpTemplate,
    pub eta: f64,
    pub duration: f64,
    pub target: Target,
    /// `(φ₁, φ₂)`; required by `prepare` and `evolve`.
    pub phases: Option<[f64; 2]>,
    #[serde(default)]
    pub reference_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Grid points per axis over `[0, 2π]`, both ends included.
    #[serde(default = "default_sweep_points")]
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            points: default_sweep_points(),
        }
    }
}

fn default_sweep_points() -> usize {
    41
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in the
    /// file do not matter but every effective value does.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn geometry(&self) -> Result<&Geometry, CliError> {
        self.geometry
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [geometry] section".into()))
    }

    /// Builds and validates the ensemble, applying the rate override.
    pub fn ensemble(&self) -> Result<Ensemble, CliError> {
        let e = self.geometry()?.build().map_err(CliError::from_input)?;
        match self.physics.rate {
            Some(r) => e.with_uniform_rate(r).map_err(CliError::from_input),
            None => Ok(e),
        }
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }

    /// Checks every section that is present without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.geometry.is_some() {
            self.ensemble()?;
        }
        if self.physics.dimension_cap == 0 {
            return Err(CliError::Config("physics.dimension_cap must be positive".into()));
        }
        if let Some(scan) = &self.couplings {
            scan.values()?;
        }
        if let Some(lr) = &self.lowest_rates {
            lr.scan().values()?;
            if lr.configurations.is_empty() {
                return Err(CliError::Config("lowest_rates.configurations is empty".into()));
            }
        }
        if let Some(ev) = &self.evolve {
            if !(ev.t_final.is_finite() && ev.t_final > 0.0) {
                return Err(CliError::Config(format!("evolve.t_final must be positive, got {}", ev.t_final)));
            }
            if ev.experiment == Experiment::Decay && ev.initial.is_none() {
                return Err(CliError::Config("evolve.initial is required for the decay experiment".into()));
            }
        }
        if let Some(d) = &self.drive {
            if !(d.eta.is_finite() && d.duration.is_finite() && d.duration > 0.0) {
                return Err(CliError::Config("drive needs a finite eta and a positive duration".into()));
            }
        }
        if self.sweep.points < 2 {
            return Err(CliError::Config("sweep.points must be at least 2".into()));
        }
        Ok(())
    }
}
