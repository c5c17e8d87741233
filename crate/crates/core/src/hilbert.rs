//! Product-space operator algebra for N atoms with M levels each.
//!
//! Level 0 of every atom is the ground state `g`; level `j + 1` is the excited
//! state of transition `j` (transitions are zero-based throughout the API).
//! Basis states are enumerated lexicographically with atom 0 as the most
//! significant digit, so `|e₁ e₂ g⟩` has labels `[1, 2, 0]`.
//!
//! Matrices are dense `nalgebra` matrices. The dissipator is never expanded
//! into a superoperator; it is applied directly to ρ from precomputed sparse
//! index tables.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::couplings::CouplingTensors;
use crate::error::{Error, Result};
use crate::geometry::Ensemble;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest Hilbert space built unless a different cap is requested.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

const ZERO: C64 = C64::new(0.0, 0.0);

/// All `M^N` product states, grouped by excitation number (the number of
/// atoms not in `g`).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldBasis {
    n_atoms: usize,
    n_levels: usize,
    labels: Vec<Vec<u8>>,
    excitation: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    position_in_block: Vec<usize>,
}

impl ManifoldBasis {
    pub fn new(n_atoms: usize, n_levels: usize) -> Result<Self> {
        Self::with_cap(n_atoms, n_levels, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(n_atoms: usize, n_levels: usize, cap: usize) -> Result<Self> {
        if n_atoms < 1 {
            return Err(Error::InvalidArgument("need at least one atom".into()));
        }
        if !(2..=u8::MAX as usize).contains(&n_levels) {
            return Err(Error::InvalidArgument(format!("need 2..=255 levels, got {n_levels}")));
        }
        let dim = (0..n_atoms).try_fold(1usize, |acc, _| acc.checked_mul(n_levels));
        let dim = match dim {
            Some(d) if d <= cap => d,
            Some(d) => return Err(Error::Capacity { dim: d, cap }),
            None => return Err(Error::Capacity { dim: usize::MAX, cap }),
        };
        let mut labels = Vec::with_capacity(dim);
        let mut excitation = Vec::with_capacity(dim);
        let mut blocks = vec![Vec::new(); n_atoms + 1];
        let mut position_in_block = Vec::with_capacity(dim);
        for idx in 0..dim {
            let mut rest = idx;
            let mut label = vec![0u8; n_atoms];
            for slot in label.iter_mut().rev() {
                *slot = (rest % n_levels) as u8;
                rest /= n_levels;
            }
            let n = label.iter().filter(|&&l| l != 0).count();
            position_in_block.push(blocks[n].len());
            blocks[n].push(idx);
            excitation.push(n);
            labels.push(label);
        }
        Ok(Self {
            n_atoms,
            n_levels,
            labels,
            excitation,
            blocks,
            position_in_block,
        })
    }

    /// Basis matching an ensemble's atom and level counts.
    pub fn for_ensemble(ensemble: &Ensemble, cap: usize) -> Result<Self> {
        Self::with_cap(ensemble.n_atoms(), ensemble.n_levels(), cap)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_transitions(&self) -> usize {
        self.n_levels - 1
    }

    pub fn label(&self, idx: usize) -> &[u8] {
        &self.labels[idx]
    }

    pub fn excitation(&self, idx: usize) -> usize {
        self.excitation[idx]
    }

    /// Basis indices with exactly `n` excited atoms, ascending.
    pub fn block(&self, n: usize) -> &[usize] {
        self.blocks.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Position of basis state `idx` inside its excitation block.
    pub fn position_in_block(&self, idx: usize) -> usize {
        self.position_in_block[idx]
    }

    pub fn index_of(&self, levels: &[usize]) -> Option<usize> {
        if levels.len() != self.n_atoms || levels.iter().any(|&l| l >= self.n_levels) {
            return None;
        }
        Some(levels.iter().fold(0, |acc, &l| acc * self.n_levels + l))
    }

    /// Human-readable ket such as `|e1 e2 g⟩`.
    pub fn ket(&self, idx: usize) -> String {
        let parts: Vec<String> = self.labels[idx]
            .iter()
            .map(|&l| if l == 0 { "g".to_string() } else { format!("e{l}") })
            .collect();
        format!("|{}⟩", parts.join(" "))
    }

    /// Normalized product state with the given per-atom levels.
    pub fn product_state(&self, levels: &[usize]) -> Result<CVector> {
        let idx = self
            .index_of(levels)
            .ok_or_else(|| Error::IndexOutOfRange(format!("levels {levels:?}")))?;
        let mut v = CVector::zeros(self.dim());
        v[idx] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// Restricts a full-space vector to block `n`.
    pub fn restrict_vector(&self, v: &CVector, n: usize) -> CVector {
        CVector::from_iterator(self.block(n).len(), self.block(n).iter().map(|&i| v[i]))
    }

    /// Embeds a block-`n` vector into the full space.
    pub fn embed_vector(&self, v: &CVector, n: usize) -> CVector {
        let mut out = CVector::zeros(self.dim());
        for (p, &i) in self.block(n).iter().enumerate() {
            out[i] = v[p];
        }
        out
    }

    /// Restricts a full-space operator to block `n`.
    pub fn restrict_matrix(&self, m: &CMatrix, n: usize) -> CMatrix {
        let b = self.block(n);
        CMatrix::from_fn(b.len(), b.len(), |r, c| m[(b[r], b[c])])
    }

    fn check_channel(&self, atom: usize, transition: usize) -> Result<()> {
        if atom >= self.n_atoms || transition >= self.n_transitions() {
            return Err(Error::IndexOutOfRange(format!(
                "atom {atom}, transition {transition} for {} atoms with {} transitions",
                self.n_atoms,
                self.n_transitions()
            )));
        }
        Ok(())
    }

    fn check_tensors(&self, tensors: &CouplingTensors) -> Result<()> {
        if tensors.n_atoms() != self.n_atoms {
            return Err(Error::DimensionMismatch {
                expected: self.n_atoms,
                found: tensors.n_atoms(),
            });
        }
        if tensors.n_transitions() != self.n_transitions() {
            return Err(Error::DimensionMismatch {
                expected: self.n_transitions(),
                found: tensors.n_transitions(),
            });
        }
        Ok(())
    }

    fn with_level(&self, idx: usize, atom: usize, level: usize) -> usize {
        let stride = self.n_levels.pow((self.n_atoms - 1 - atom) as u32);
        let old = self.labels[idx][atom] as usize;
        idx + level * stride - old * stride
    }
}

/// `σ_j^{i−}` stored as the `(from, to)` basis-index pairs it connects.
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub atom: usize,
    pub transition: usize,
    pub pairs: Vec<(usize, usize)>,
}

pub fn ladder(basis: &ManifoldBasis, atom: usize, transition: usize) -> Result<Ladder> {
    basis.check_channel(atom, transition)?;
    let level = (transition + 1) as u8;
    let pairs = (0..basis.dim())
        .filter(|&s| basis.labels[s][atom] == level)
        .map(|s| (s, basis.with_level(s, atom, 0)))
        .collect();
    Ok(Ladder {
        atom,
        transition,
        pairs,
    })
}

/// Lowering operator `σ_j^{i−} = |g⟩⟨e_j|` on atom `i`, identity elsewhere.
pub fn sigma_minus(basis: &ManifoldBasis, atom: usize, transition: usize) -> Result<CMatrix> {
    let l = ladder(basis, atom, transition)?;
    let mut m = CMatrix::zeros(basis.dim(), basis.dim());
    for (from, to) in l.pairs {
        m[(to, from)] = C64::new(1.0, 0.0);
    }
    Ok(m)
}

pub fn sigma_plus(basis: &ManifoldBasis, atom: usize, transition: usize) -> Result<CMatrix> {
    Ok(sigma_minus(basis, atom, transition)?.adjoint())
}

/// Diagonal excitation-number operator `Σ σ⁺σ⁻`.
pub fn number_operator(basis: &ManifoldBasis) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        basis.dim(),
        basis.excitation.iter().map(|&n| C64::new(n as f64, 0.0)),
    ))
}

/// Reference frame for the bare atomic energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Diagonal carries `ω_j` for every excited atom.
    Lab,
    /// Frame rotating at ω₀ (= 1 in frequency units): diagonal carries `ω_j − 1`.
    Rotating,
}

impl Frame {
    fn offset(self) -> f64 {
        match self {
            Frame::Lab => 0.0,
            Frame::Rotating => 1.0,
        }
    }
}

/// Entries `(row, col, value)` of the effective Hamiltonian restricted to the
/// source states in `sources`.
fn hamiltonian_entries(
    basis: &ManifoldBasis,
    ensemble: &Ensemble,
    tensors: &CouplingTensors,
    frame: Frame,
    sources: &[usize],
) -> Vec<(usize, usize, f64)> {
    let n = basis.n_atoms;
    let t = basis.n_transitions();
    let mut out = Vec::new();
    for &s in sources {
        let label = &basis.labels[s];
        let diag: f64 = label
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0)
            .map(|(i, &l)| ensemble.atoms[i].transitions[l as usize - 1].frequency - frame.offset())
            .sum();
        if diag != 0.0 {
            out.push((s, s, diag));
        }
        // Ω σ_j^{i+} σ_{j'}^{k-}: move the excitation of atom k (level j'+1) to atom i (level j+1)
        for k in 0..n {
            let lk = label[k] as usize;
            if lk == 0 {
                continue;
            }
            let lowered = basis.with_level(s, k, 0);
            for i in 0..n {
                if i == k || label[i] != 0 {
                    continue;
                }
                for j in 0..t {
                    let w = tensors.omega(i, j, k, lk - 1);
                    if w != 0.0 {
                        out.push((basis.with_level(lowered, i, j + 1), s, w));
                    }
                }
            }
        }
    }
    out
}

fn check_ensemble(basis: &ManifoldBasis, ensemble: &Ensemble) -> Result<()> {
    if ensemble.n_atoms() != basis.n_atoms || ensemble.n_levels() != basis.n_levels {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: ensemble.n_levels().pow(ensemble.n_atoms() as u32),
        });
    }
    Ok(())
}

/// Effective dipole-dipole Hamiltonian on the full product space.
pub fn hamiltonian(
    basis: &ManifoldBasis,
    ensemble: &Ensemble,
    tensors: &CouplingTensors,
    frame: Frame,
) -> Result<CMatrix> {
    basis.check_tensors(tensors)?;
    check_ensemble(basis, ensemble)?;
    let all: Vec<usize> = (0..basis.dim()).collect();
    let mut h = CMatrix::zeros(basis.dim(), basis.dim());
    for (r, c, v) in hamiltonian_entries(basis, ensemble, tensors, frame, &all) {
        h[(r, c)] += v;
    }
    Ok(h)
}

/// The Hamiltonian built directly inside excitation block `n`.
pub fn hamiltonian_block(
    basis: &ManifoldBasis,
    ensemble: &Ensemble,
    tensors: &CouplingTensors,
    frame: Frame,
    n: usize,
) -> Result<CMatrix> {
    basis.check_tensors(tensors)?;
    check_ensemble(basis, ensemble)?;
    if n > basis.n_atoms {
        return Err(Error::IndexOutOfRange(format!("excitation block {n}")));
    }
    let block = basis.block(n);
    let mut h = CMatrix::zeros(block.len(), block.len());
    for (r, c, v) in hamiltonian_entries(basis, ensemble, tensors, frame, block) {
        h[(basis.position_in_block[r], basis.position_in_block[c])] += v;
    }
    Ok(h)
}

/// Complex drive amplitudes `η^i_j` (units of Γ_ref) and the laser detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    /// Indexed `[atom][transition]`.
    pub eta: Vec<Vec<C64>>,
    /// Laser minus atomic frequency; enters as `−Δ N_exc` in the laser frame.
    pub detuning: f64,
}

impl PumpConfig {
    pub fn zero(n_atoms: usize, n_transitions: usize) -> Self {
        Self {
            eta: vec![vec![ZERO; n_transitions]; n_atoms],
            detuning: 0.0,
        }
    }

    /// The same real amplitude on every transition of every atom.
    pub fn uniform(n_atoms: usize, n_transitions: usize, eta: f64) -> Self {
        Self {
            eta: vec![vec![C64::new(eta, 0.0); n_transitions]; n_atoms],
            detuning: 0.0,
        }
    }
}

/// `Σ (η^i_j σ_j^{i+} + conj(η^i_j) σ_j^{i−}) − Δ N_exc`.
pub fn pump_hamiltonian(basis: &ManifoldBasis, pump: &PumpConfig) -> Result<CMatrix> {
    if pump.eta.len() != basis.n_atoms {
        return Err(Error::DimensionMismatch {
            expected: basis.n_atoms,
            found: pump.eta.len(),
        });
    }
    if !pump.detuning.is_finite() {
        return Err(Error::InvalidArgument("non-finite detuning".into()));
    }
    let mut h = CMatrix::zeros(basis.dim(), basis.dim());
    for (i, row) in pump.eta.iter().enumerate() {
        if row.len() != basis.n_transitions() {
            return Err(Error::DimensionMismatch {
                expected: basis.n_transitions(),
                found: row.len(),
            });
        }
        for (j, &eta) in row.iter().enumerate() {
            if !(eta.re.is_finite() && eta.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite drive on atom {i}, transition {j}")));
            }
            if eta == ZERO {
                continue;
            }
            for (from, to) in ladder(basis, i, j)?.pairs {
                h[(from, to)] += eta;
                h[(to, from)] += eta.conj();
            }
        }
    }
    if pump.detuning != 0.0 {
        for s in 0..basis.dim() {
            h[(s, s)] -= C64::new(pump.detuning * basis.excitation[s] as f64, 0.0);
        }
    }
    Ok(h)
}

/// Normalization of the Lindblad dissipator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LindbladConvention {
    /// An isolated excited transition decays as `e^{−γ t}`: Γ is halved
    /// inside `2σρσ⁺ − {σ⁺σ, ρ}`.
    #[default]
    PopulationRate,
    /// Γ enters `2σρσ⁺ − {σ⁺σ, ρ}` unscaled; populations decay at `2γ`.
    PaperLiteral,
}

impl LindbladConvention {
    /// Factor multiplying Γ inside the dissipator.
    pub fn weight(self) -> f64 {
        match self {
            LindbladConvention::PopulationRate => 0.5,
            LindbladConvention::PaperLiteral => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LindbladConvention::PopulationRate => "population-rate",
            LindbladConvention::PaperLiteral => "paper-literal",
        }
    }
}

impl std::str::FromStr for LindbladConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population-rate" => Ok(Self::PopulationRate),
            "paper-literal" => Ok(Self::PaperLiteral),
            other => Err(Error::InvalidArgument(format!("unknown convention `{other}`"))),
        }
    }
}

/// Precomputed sparse form of
/// `L[ρ] = Σ w Γ_ab (2σ_a ρ σ_b⁺ − σ_a⁺σ_b ρ − ρ σ_a⁺σ_b)`, `w` the convention weight.
#[derive(Debug, Clone)]
pub struct Dissipator {
    dim: usize,
    /// `K = Σ w Γ_ab σ_a⁺σ_b` as `(row, col, value)`.
    anti: Vec<(usize, usize, f64)>,
    /// Jump term entries `(src, dst, 2 w Γ_ab)` on column-major flat indices.
    jumps: Vec<(usize, usize, f64)>,
}

impl Dissipator {
    pub fn new(
        basis: &ManifoldBasis,
        tensors: &CouplingTensors,
        convention: LindbladConvention,
    ) -> Result<Self> {
        basis.check_tensors(tensors)?;
        let d = basis.dim();
        let n = basis.n_atoms;
        let t = basis.n_transitions();
        let w = convention.weight();
        let ladders: Vec<Ladder> = (0..n)
            .flat_map(|i| (0..t).map(move |j| (i, j)))
            .map(|(i, j)| ladder(basis, i, j))
            .collect::<Result<_>>()?;

        let mut jumps = Vec::new();
        for a in &ladders {
            for b in &ladders {
                let g = w * tensors.gamma(a.atom, a.transition, b.atom, b.transition);
                if g == 0.0 {
                    continue;
                }
                for &(s, ts) in &a.pairs {
                    for &(sp, tsp) in &b.pairs {
                        jumps.push((sp * d + s, tsp * d + ts, 2.0 * g));
                    }
                }
            }
        }

        let mut anti = Vec::new();
        for b in &ladders {
            for &(s, lowered) in &b.pairs {
                for i in 0..n {
                    if basis.labels[lowered][i] != 0 {
                        continue;
                    }
                    for j in 0..t {
                        let g = w * tensors.gamma(i, j, b.atom, b.transition);
                        if g != 0.0 {
                            anti.push((basis.with_level(lowered, i, j + 1), s, g));
                        }
                    }
                }
            }
        }
        anti.sort_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(anti.len());
        for (r, c, v) in anti {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        Ok(Self {
            dim: d,
            anti: merged,
            jumps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K = Σ w Γ_ab σ_a⁺σ_b` as a dense matrix.
    pub fn anticommutator_operator(&self) -> CMatrix {
        let mut k = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.anti {
            k[(r, c)] += v;
        }
        k
    }

    /// Hermitian operator `2K` whose expectation value in a state of definite
    /// excitation number is that state's total decay rate.
    pub fn decay_operator(&self) -> CMatrix {
        self.anticommutator_operator() * C64::new(2.0, 0.0)
    }

    pub(crate) fn anti_entries(&self) -> &[(usize, usize, f64)] {
        &self.anti
    }

    /// Adds the jump term `Σ 2wΓ_ab σ_a ρ σ_b⁺` of a column-major flat ρ to `out`.
    #[inline]
    pub(crate) fn add_jumps(&self, rho: &[C64], out: &mut [C64]) {
        for &(src, dst, g) in &self.jumps {
            out[dst] += rho[src] * g;
        }
    }

    /// `L[ρ]` for a matrix of matching dimension.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.nrows(),
            });
        }
        let mut out = CMatrix::zeros(self.dim, self.dim);
        self.add_jumps(rho.as_slice(), out.as_mut_slice());
        let d = self.dim;
        // − Kρ − ρK
        for &(r, c, v) in &self.anti {
            for q in 0..d {
                out[(r, q)] -= rho[(c, q)] * v;
                out[(q, c)] -= rho[(q, r)] * v;
            }
        }
        Ok(out)
    }
}

/// One-shot dissipator application.
pub fn dissipator(
    basis: &ManifoldBasis,
    tensors: &CouplingTensors,
    convention: LindbladConvention,
    rho: &DensityMatrix,
) -> Result<CMatrix> {
    Dissipator::new(basis, tensors, convention)?.apply(rho.matrix())
}

/// A validated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-9;
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const NEGATIVITY_TOL: f64 = 1e-9;

    /// Checks trace, hermiticity and positivity.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidArgument(format!("density matrix trace is {tr}")));
        }
        let herm = (&m - m.adjoint()).camax();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix is not Hermitian (max deviation {herm:e})"
            )));
        }
        let rho = Self(m);
        let min = rho.min_eigenvalue();
        if min < -Self::NEGATIVITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix has eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }

    /// Wraps a matrix without validation.
    pub fn new_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    /// `|ψ⟩⟨ψ|` for a normalized ψ.
    pub fn pure(psi: &CVector) -> Result<Self> {
        check_normalized(psi)?;
        Ok(Self(psi * psi.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Population in each excitation block.
    pub fn manifold_populations(&self, basis: &ManifoldBasis) -> Vec<f64> {
        (0..=basis.n_atoms)
            .map(|n| basis.block(n).iter().map(|&s| self.0[(s, s)].re).sum())
            .collect()
    }
}

/// Rejects states whose norm differs from one by more than 1e−9.
pub fn check_normalized(psi: &CVector) -> Result<()> {
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Unnormalized(norm));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::coupling_tensors;
    use crate::geometry::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn block_sizes() {
        let b = ManifoldBasis::new(3, 3).unwrap();
        assert_eq!(b.dim(), 27);
        assert_eq!(b.block_sizes(), vec![1, 6, 12, 8]);
        let b = ManifoldBasis::new(2, 2).unwrap();
        assert_eq!(b.block_sizes(), vec![1, 2, 1]);
        let b = ManifoldBasis::new(4, 4).unwrap();
        assert_eq!(b.dim(), 256);
        assert_eq!(b.block_sizes(), vec![1, 12, 54, 108, 81]);
    }

    #[test]
    fn capacity_error() {
        assert_eq!(
            ManifoldBasis::new(7, 4).unwrap_err(),
            Error::Capacity { dim: 16384, cap: DEFAULT_DIMENSION_CAP }
        );
        assert!(ManifoldBasis::with_cap(3, 3, 26).is_err());
        assert!(ManifoldBasis::new(0, 3).is_err());
        assert!(ManifoldBasis::new(2, 1).is_err());
    }

    #[test]
    fn labels_and_indices() {
        let b = ManifoldBasis::new(3, 3).unwrap();
        let idx = b.index_of(&[1, 2, 0]).unwrap();
        assert_eq!(b.label(idx), &[1, 2, 0]);
        assert_eq!(b.ket(idx), "|e1 e2 g⟩");
        assert_eq!(b.excitation(idx), 2);
        assert!(b.index_of(&[3, 0, 0]).is_none());
    }

    #[test]
    fn lowering_operator() {
        let b = ManifoldBasis::new(3, 3).unwrap();
        let sm = sigma_minus(&b, 0, 0).unwrap();
        let ground = b.product_state(&[0, 0, 0]).unwrap();
        assert_eq!((&sm * &ground).norm(), 0.0);
        let v = &sm * b.product_state(&[1, 2, 0]).unwrap();
        assert_eq!(v, b.product_state(&[0, 2, 0]).unwrap());
        // σ⁺σ⁻ is a projector
        let p = sm.adjoint() * &sm;
        assert_eq!(&p * &p, p);
        assert!(sigma_minus(&b, 3, 0).is_err());
        assert!(sigma_minus(&b, 0, 2).is_err());
    }

    #[test]
    fn pair_single_excitation_block() {
        let e = make_pair(0.1, &DipoleScheme::Parallel).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let b = ManifoldBasis::new(2, 2).unwrap();
        let h = hamiltonian_block(&b, &e, &t, Frame::Lab, 1).unwrap();
        let w = t.omega(0, 0, 1, 0);
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0), c(w), c(w), c(1.0)]);
        assert!((h - expected).camax() < 1e-15);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_excitations() {
        let e = make_triangle(0.13, true).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let b = ManifoldBasis::new(3, 3).unwrap();
        let h = hamiltonian(&b, &e, &t, Frame::Lab).unwrap();
        assert!((&h - h.adjoint()).camax() <= 1e-12 * h.camax());
        let n = number_operator(&b);
        assert!((&h * &n - &n * &h).camax() < 1e-12 * h.camax());
    }

    #[test]
    fn block_construction_matches_restriction() {
        let e = make_dark_chain(4, 0.07).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let b = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP).unwrap();
        let h = hamiltonian(&b, &e, &t, Frame::Rotating).unwrap();
        for n in 0..=4 {
            let direct = hamiltonian_block(&b, &e, &t, Frame::Rotating, n).unwrap();
            let restricted = b.restrict_matrix(&h, n);
            assert!((direct - restricted).camax() <= 1e-14);
        }
    }

    #[test]
    fn pump_operator() {
        let b = ManifoldBasis::new(1, 2).unwrap();
        let h = pump_hamiltonian(&b, &PumpConfig::uniform(1, 1, 0.8)).unwrap();
        let ev = h.symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        assert!((lo + 0.8).abs() < 1e-14 && (hi - 0.8).abs() < 1e-14);

        let b = ManifoldBasis::new(3, 3).unwrap();
        assert_eq!(pump_hamiltonian(&b, &PumpConfig::zero(3, 2)).unwrap(), CMatrix::zeros(27, 27));
        let h = pump_hamiltonian(&b, &PumpConfig::uniform(3, 2, 2.5)).unwrap();
        let mut expected = CMatrix::zeros(27, 27);
        for i in 0..3 {
            for j in 0..2 {
                let sm = sigma_minus(&b, i, j).unwrap();
                expected += (sm.adjoint() + sm) * c(2.5);
            }
        }
        assert_eq!(h, expected);

        let mut pump = PumpConfig::uniform(3, 2, 1.0);
        pump.eta[1][0] = C64::from_polar(1.3, 0.7);
        let h = pump_hamiltonian(&b, &pump).unwrap();
        assert!((&h - h.adjoint()).camax() < 1e-15);
    }

    #[test]
    fn single_atom_decay_rate() {
        let atom = Atom {
            position: Vec3::zeros(),
            transitions: vec![Transition::degenerate(Vec3::z())],
        };
        let e = Ensemble::new(vec![atom], 1.0, Orthogonality::Enforced).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let b = ManifoldBasis::new(1, 2).unwrap();
        let rho = DensityMatrix::pure(&b.product_state(&[1]).unwrap()).unwrap();
        let l = dissipator(&b, &t, LindbladConvention::PopulationRate, &rho).unwrap();
        assert!((l[(1, 1)].re + 1.0).abs() < 1e-15);
        assert!((l[(0, 0)].re - 1.0).abs() < 1e-15);
        let l = dissipator(&b, &t, LindbladConvention::PaperLiteral, &rho).unwrap();
        assert!((l[(1, 1)].re + 2.0).abs() < 1e-15);
    }

    #[test]
    fn ground_state_is_stationary() {
        let e = make_triangle(0.1, true).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let b = ManifoldBasis::new(3, 3).unwrap();
        let rho = DensityMatrix::pure(&b.product_state(&[0, 0, 0]).unwrap()).unwrap();
        let l = dissipator(&b, &t, LindbladConvention::PopulationRate, &rho).unwrap();
        assert_eq!(l.camax(), 0.0);
    }

    #[test]
    fn sparse_dissipator_matches_dense_formula() {
        let e = make_triangle(0.21, true).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let b = ManifoldBasis::new(3, 3).unwrap();
        let psi = CVector::from_fn(27, |i, _| C64::new((i as f64 * 0.37).sin(), (i as f64 * 1.1).cos()));
        let psi = &psi / C64::new(psi.norm(), 0.0);
        let rho = DensityMatrix::pure(&psi).unwrap();
        let fast = dissipator(&b, &t, LindbladConvention::PopulationRate, &rho).unwrap();
        let mut dense = CMatrix::zeros(27, 27);
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..3 {
                    for jp in 0..2 {
                        let g = 0.5 * t.gamma(i, j, k, jp);
                        let sa = sigma_minus(&b, i, j).unwrap();
                        let sb = sigma_minus(&b, k, jp).unwrap();
                        let m = rho.matrix();
                        let hop = sa.adjoint() * &sb;
                        dense += (&sa * m * sb.adjoint() * c(2.0) - &hop * m - m * &hop) * c(g);
                    }
                }
            }
        }
        assert!((fast - dense).camax() < 1e-13);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!(DensityMatrix::new(mixed.matrix().clone()).is_ok());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(DensityMatrix::new(bad).is_err());
        let unnormalized = CVector::from_element(2, c(1.0));
        assert!(matches!(DensityMatrix::pure(&unnormalized), Err(Error::Unnormalized(_))));
    }
}
