//! Atomic ensembles: positions and per-transition dipole orientations.
//!
//! Lengths are in units of the reference wavelength λ₀, rates in units of a
//! reference rate Γ_ref and transition frequencies in units of ω₀. The x-axis is
//! the separation axis for pairs and chains; planar configurations (triangle,
//! square) lie in the xy-plane.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_NORM_TOL: f64 = 1e-12;
const ORTHOGONALITY_TOL: f64 = 1e-10;

/// One excited level `e_j` of a V-type atom and its dipole transition to `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Transition frequency in units of ω₀.
    pub frequency: f64,
    /// Single-atom spontaneous emission rate in units of Γ_ref.
    pub rate: f64,
    /// Unit dipole orientation.
    pub dipole: Vec3,
}

impl Transition {
    /// Degenerate transition (ω = ω₀) with unit rate.
    pub fn degenerate(dipole: Vec3) -> Self {
        Self {
            frequency: 1.0,
            rate: 1.0,
            dipole,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: Vec3,
    pub transitions: Vec<Transition>,
}

/// Whether dipoles within one atom must be mutually orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orthogonality {
    #[default]
    Enforced,
    Relaxed,
}

/// Dipole orientations shared by every atom of a pair, chain or square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DipoleScheme {
    /// A single transition along ẑ on every atom.
    Parallel,
    /// `T` transitions perpendicular to the x-axis at azimuths `tπ/T`
    /// (ŷ, ẑ for two transitions).
    OrthogonalToAxis { transitions: usize },
    /// x̂, ŷ, ẑ in that order, truncated to `transitions`.
    Cartesian { transitions: usize },
    /// Per-transition `(θ, φ)` as in [`dipole_from_angles`].
    Angles(Vec<(f64, f64)>),
    /// Per-transition vectors; normalized on construction.
    Explicit(Vec<Vec3>),
}

impl DipoleScheme {
    fn dipoles(&self, orthogonality: Orthogonality) -> Result<Vec<Vec3>> {
        let dipoles = match self {
            DipoleScheme::Parallel => vec![Vec3::z()],
            DipoleScheme::OrthogonalToAxis { transitions } => {
                let t = *transitions;
                if t == 0 {
                    return Err(Error::InvalidGeometry("zero transitions".into()));
                }
                if t > 2 && orthogonality == Orthogonality::Enforced {
                    return Err(Error::InvalidGeometry(format!(
                        "{t} mutually orthogonal dipoles cannot all be perpendicular to the chain axis"
                    )));
                }
                (0..t)
                    .map(|n| dipole_from_angles(FRAC_PI_2, n as f64 * PI / t as f64))
                    .collect()
            }
            DipoleScheme::Cartesian { transitions } => {
                let t = *transitions;
                if t == 0 || t > 3 {
                    return Err(Error::InvalidGeometry(format!(
                        "Cartesian scheme supports 1 to 3 transitions, got {t}"
                    )));
                }
                [Vec3::x(), Vec3::y(), Vec3::z()][..t].to_vec()
            }
            DipoleScheme::Angles(angles) => angles
                .iter()
                .map(|&(theta, phi)| dipole_from_angles(theta, phi))
                .collect(),
            DipoleScheme::Explicit(vectors) => {
                let mut out = Vec::with_capacity(vectors.len());
                for v in vectors {
                    let norm = v.norm();
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(Error::InvalidGeometry("zero or non-finite dipole".into()));
                    }
                    out.push(v / norm);
                }
                out
            }
        };
        if dipoles.is_empty() {
            return Err(Error::InvalidGeometry("zero transitions".into()));
        }
        Ok(dipoles)
    }
}

/// N atoms at fixed positions sharing the same number of transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub atoms: Vec<Atom>,
    /// λ₀ in the length unit of the positions; `k₀ = 2π/λ₀`.
    pub reference_wavelength: f64,
    pub orthogonality: Orthogonality,
}

impl Ensemble {
    /// Validates and wraps a list of atoms.
    ///
    /// A single atom is accepted (its coupling tensors are purely diagonal);
    /// all geometric builders produce at least two.
    pub fn new(
        atoms: Vec<Atom>,
        reference_wavelength: f64,
        orthogonality: Orthogonality,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidGeometry("empty ensemble".into()));
        }
        if !(reference_wavelength.is_finite() && reference_wavelength > 0.0) {
            return Err(Error::InvalidGeometry(
                "reference wavelength must be positive".into(),
            ));
        }
        let n_trans = atoms[0].transitions.len();
        if n_trans == 0 {
            return Err(Error::InvalidGeometry("atoms need at least one transition".into()));
        }
        for (i, atom) in atoms.iter().enumerate() {
            if atom.transitions.len() != n_trans {
                return Err(Error::InvalidGeometry(format!(
                    "atom {i} has {} transitions, expected {n_trans}",
                    atom.transitions.len()
                )));
            }
            if !atom.position.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidGeometry(format!("atom {i} has a non-finite position")));
            }
            for (j, t) in atom.transitions.iter().enumerate() {
                if (t.dipole.norm() - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::InvalidGeometry(format!(
                        "dipole of atom {i}, transition {j} is not a unit vector"
                    )));
                }
                if !(t.rate.is_finite() && t.rate >= 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "rate of atom {i}, transition {j} must be finite and non-negative"
                    )));
                }
                if !(t.frequency.is_finite() && t.frequency > 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "frequency of atom {i}, transition {j} must be positive"
                    )));
                }
            }
            if orthogonality == Orthogonality::Enforced {
                for a in 0..n_trans {
                    for b in (a + 1)..n_trans {
                        let dot = atom.transitions[a].dipole.dot(&atom.transitions[b].dipole);
                        if dot.abs() > ORTHOGONALITY_TOL {
                            return Err(Error::InvalidGeometry(format!(
                                "dipoles {a} and {b} of atom {i} are not orthogonal"
                            )));
                        }
                    }
                }
            }
        }
        for i in 0..atoms.len() {
            for k in (i + 1)..atoms.len() {
                if (atoms[i].position - atoms[k].position).norm() <= 0.0 {
                    return Err(Error::CoincidentAtoms { i, k });
                }
            }
        }
        Ok(Self {
            atoms,
            reference_wavelength,
            orthogonality,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Number of excited levels per atom (M − 1).
    pub fn n_transitions(&self) -> usize {
        self.atoms[0].transitions.len()
    }

    /// Levels per atom including the ground state (M).
    pub fn n_levels(&self) -> usize {
        self.n_transitions() + 1
    }

    pub fn distance(&self, i: usize, k: usize) -> f64 {
        (self.atoms[i].position - self.atoms[k].position).norm()
    }

    /// Replaces every single-atom rate by `rate`.
    pub fn with_uniform_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidArgument(format!("rate must be non-negative, got {rate}")));
        }
        for atom in &mut self.atoms {
            for t in &mut atom.transitions {
                t.rate = rate;
            }
        }
        Ok(self)
    }
}

/// Unit dipole with polar angle `theta` measured from the x-axis and azimuth
/// `phi` in the yz-plane: `(cos θ, sin θ cos φ, sin θ sin φ)`.
pub fn dipole_from_angles(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin())
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{name} must be positive, got {value}")))
    }
}

fn uniform_atoms(positions: Vec<Vec3>, dipoles: &[Vec3]) -> Vec<Atom> {
    positions
        .into_iter()
        .map(|position| Atom {
            position,
            transitions: dipoles.iter().map(|d| Transition::degenerate(*d)).collect(),
        })
        .collect()
}

/// Two atoms on the x-axis, `distance` apart.
pub fn make_pair(distance: f64, scheme: &DipoleScheme) -> Result<Ensemble> {
    positive("distance", distance)?;
    make_chain(2, distance, scheme, Orthogonality::Enforced)
}

/// `n_atoms` equally spaced atoms along the x-axis starting at the origin.
pub fn make_chain(
    n_atoms: usize,
    spacing: f64,
    scheme: &DipoleScheme,
    orthogonality: Orthogonality,
) -> Result<Ensemble> {
    if n_atoms < 2 {
        return Err(Error::InvalidGeometry(format!(
            "a chain needs at least two atoms, got {n_atoms}"
        )));
    }
    positive("spacing", spacing)?;
    let dipoles = scheme.dipoles(orthogonality)?;
    let positions = (0..n_atoms)
        .map(|n| Vec3::new(n as f64 * spacing, 0.0, 0.0))
        .collect();
    Ensemble::new(uniform_atoms(positions, &dipoles), 1.0, orthogonality)
}

/// Chain of N atoms with N − 1 transitions perpendicular to the axis.
///
/// Orthogonality is relaxed automatically from four atoms on, where it cannot
/// be satisfied.
pub fn make_dark_chain(n_atoms: usize, spacing: f64) -> Result<Ensemble> {
    let orthogonality = if n_atoms > 3 {
        Orthogonality::Relaxed
    } else {
        Orthogonality::Enforced
    };
    make_chain(
        n_atoms,
        spacing,
        &DipoleScheme::OrthogonalToAxis {
            transitions: n_atoms.saturating_sub(1).max(1),
        },
        orthogonality,
    )
}

fn triangle_positions(side: f64) -> Vec<Vec3> {
    let radius = side / 3f64.sqrt();
    (0..3)
        .map(|k| {
            let angle = FRAC_PI_2 + TAU * k as f64 / 3.0;
            Vec3::new(radius * angle.cos(), radius * angle.sin(), 0.0)
        })
        .collect()
}

/// Equilateral triangle in the xy-plane centred on the origin, two transitions
/// per atom.
///
/// With `c3_symmetric` the first dipole of every atom is ẑ and the second
/// points radially away from the centroid, so atom k carries atom 0's pair
/// rotated by 2πk/3 about ẑ. Otherwise every atom carries (ẑ, x̂).
pub fn make_triangle(side: f64, c3_symmetric: bool) -> Result<Ensemble> {
    positive("side", side)?;
    let positions = triangle_positions(side);
    if !c3_symmetric {
        return Ensemble::new(
            uniform_atoms(positions, &[Vec3::z(), Vec3::x()]),
            1.0,
            Orthogonality::Enforced,
        );
    }
    let first = [Vec3::z(), Vec3::y()];
    let atoms = positions
        .into_iter()
        .enumerate()
        .map(|(k, position)| {
            let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), TAU * k as f64 / 3.0);
            Atom {
                position,
                transitions: first.iter().map(|d| Transition::degenerate(rot * d)).collect(),
            }
        })
        .collect();
    Ensemble::new(atoms, 1.0, Orthogonality::Enforced)
}

/// Equilateral triangle with the same dipoles on every atom.
pub fn make_triangle_uniform(side: f64, scheme: &DipoleScheme) -> Result<Ensemble> {
    positive("side", side)?;
    let dipoles = scheme.dipoles(Orthogonality::Enforced)?;
    Ensemble::new(
        uniform_atoms(triangle_positions(side), &dipoles),
        1.0,
        Orthogonality::Enforced,
    )
}

/// Square of side `side` in the xy-plane centred on the origin; vertices are
/// listed counter-clockwise.
pub fn make_square(side: f64, scheme: &DipoleScheme) -> Result<Ensemble> {
    positive("side", side)?;
    let h = side / 2.0;
    let positions = vec![
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ];
    let dipoles = scheme.dipoles(Orthogonality::Enforced)?;
    Ensemble::new(uniform_atoms(positions, &dipoles), 1.0, Orthogonality::Enforced)
}

/// Default square: x̂, ŷ, ẑ on every atom.
pub fn square_default(side: f64) -> Result<Ensemble> {
    make_square(side, &DipoleScheme::Cartesian { transitions: 3 })
}
