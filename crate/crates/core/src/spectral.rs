//! Per-manifold diagonalization, collective dark/superradiant states, decay
//! and feeding rates, and the eigenstate decay cascade.
//!
//! Energies are reported in the frame rotating at ω₀, i.e. as collective
//! shifts relative to `n·ω₀` in manifold `n`.

use std::fmt::Write as _;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::{coupling_tensors, CouplingTensors};
use crate::error::{Error, Result};
use crate::geometry::Ensemble;
use crate::hilbert::{
    check_normalized, hamiltonian, ladder, CMatrix, CVector, Dissipator, Frame, Ladder,
    LindbladConvention, ManifoldBasis, C64, DEFAULT_DIMENSION_CAP,
};

/// Rates below zero by less than this are round-off and clipped to 0.
pub const RATE_CLIP: f64 = 1e-12;

const DEGENERACY_REL_TOL: f64 = 1e-9;

/// Eigen-decomposition of one excitation block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenManifold {
    pub n_exc: usize,
    /// Ascending; ties ordered by decay rate, then by leading basis index.
    pub energies: Vec<f64>,
    /// Full-space eigenvectors; the largest component is real and positive.
    pub states: Vec<CVector>,
    /// Decay rate of each eigenvector (only when built with a [`RateModel`]).
    pub rates: Option<Vec<f64>>,
}

impl EigenManifold {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// Ladder tables and weighted Γ̃ for evaluating rates without forming ρ.
#[derive(Debug, Clone)]
pub struct RateModel {
    ladders: Vec<Ladder>,
    /// `w Γ_ab` over channels `a = i·T + j`.
    weights: DMatrix<f64>,
    /// `R = 2 Σ w Γ_ab σ_a⁺σ_b`.
    decay_operator: CMatrix,
    anti: CMatrix,
    convention: LindbladConvention,
}

impl RateModel {
    pub fn new(
        basis: &ManifoldBasis,
        tensors: &CouplingTensors,
        convention: LindbladConvention,
    ) -> Result<Self> {
        let dissipator = Dissipator::new(basis, tensors, convention)?;
        let ladders = (0..basis.n_atoms())
            .flat_map(|i| (0..basis.n_transitions()).map(move |j| (i, j)))
            .map(|(i, j)| ladder(basis, i, j))
            .collect::<Result<Vec<_>>>()?;
        let anti = dissipator.anticommutator_operator();
        Ok(Self {
            ladders,
            weights: tensors.gamma_matrix() * convention.weight(),
            decay_operator: &anti * C64::new(2.0, 0.0),
            anti,
            convention,
        })
    }

    pub fn convention(&self) -> LindbladConvention {
        self.convention
    }

    pub fn decay_operator(&self) -> &CMatrix {
        &self.decay_operator
    }

    /// `c_a = ⟨φ|σ_a|ψ⟩` for every channel.
    fn transition_amplitudes(&self, phi: &CVector, psi: &CVector) -> Vec<C64> {
        self.ladders
            .iter()
            .map(|l| l.pairs.iter().map(|&(from, to)| phi[to].conj() * psi[from]).sum())
            .collect()
    }

    fn jump_weight(&self, c: &[C64]) -> f64 {
        let mut acc = 0.0;
        for (a, ca) in c.iter().enumerate() {
            if *ca == C64::new(0.0, 0.0) {
                continue;
            }
            for (b, cb) in c.iter().enumerate() {
                let w = self.weights[(a, b)];
                if w != 0.0 {
                    acc += 2.0 * w * (ca * cb.conj()).re;
                }
            }
        }
        acc
    }

    /// `−⟨ψ|L[|ψ⟩⟨ψ|]|ψ⟩`, positive for a decaying state.
    pub fn decay_rate(&self, psi: &CVector) -> Result<f64> {
        check_normalized(psi)?;
        self.check_dim(psi)?;
        let loss = psi.dotc(&(&self.decay_operator * psi)).re;
        let refill = self.jump_weight(&self.transition_amplitudes(psi, psi));
        Ok(clip(loss - refill))
    }

    /// `⟨φ|L[|ψ⟩⟨ψ|]|φ⟩`: population flow from ψ into φ.
    pub fn feeding_rate(&self, upper: &CVector, lower: &CVector) -> Result<f64> {
        check_normalized(upper)?;
        check_normalized(lower)?;
        self.check_dim(upper)?;
        self.check_dim(lower)?;
        let overlap = upper.dotc(lower);
        let k_elem = lower.dotc(&(&self.anti * upper));
        let raw = self.jump_weight(&self.transition_amplitudes(lower, upper)) - 2.0 * (k_elem * overlap).re;
        Ok(clip(raw))
    }

    /// Feeding rate for two states already known to lie in adjacent
    /// manifolds; skips validation.
    fn adjacent_feeding(&self, upper: &CVector, lower: &CVector) -> f64 {
        clip(self.jump_weight(&self.transition_amplitudes(lower, upper)))
    }

    fn check_dim(&self, v: &CVector) -> Result<()> {
        if v.len() != self.decay_operator.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.decay_operator.nrows(),
                found: v.len(),
            });
        }
        Ok(())
    }
}

fn clip(rate: f64) -> f64 {
    if rate < 0.0 && rate > -RATE_CLIP {
        0.0
    } else {
        if rate < 0.0 {
            warn!("negative rate {rate:e} exceeds round-off tolerance");
        }
        rate
    }
}

/// Decay rate of a normalized state.
pub fn decay_rate(
    basis: &ManifoldBasis,
    state: &CVector,
    tensors: &CouplingTensors,
    convention: LindbladConvention,
) -> Result<f64> {
    RateModel::new(basis, tensors, convention)?.decay_rate(state)
}

/// Feeding rate `upper → lower`. States not in adjacent manifolds give a
/// structurally zero rate and a warning.
pub fn feeding_rate(
    basis: &ManifoldBasis,
    upper: &CVector,
    lower: &CVector,
    tensors: &CouplingTensors,
    convention: LindbladConvention,
) -> Result<f64> {
    match (manifold_of(basis, upper), manifold_of(basis, lower)) {
        (Some(u), Some(l)) if u == l + 1 => {}
        (u, l) => warn!("feeding rate requested between manifolds {u:?} and {l:?}"),
    }
    RateModel::new(basis, tensors, convention)?.feeding_rate(upper, lower)
}

/// Excitation number of a state supported on a single block.
pub fn manifold_of(basis: &ManifoldBasis, psi: &CVector) -> Option<usize> {
    let mut found = None;
    for (s, c) in psi.iter().enumerate() {
        if c.norm_sqr() > 1e-24 {
            let n = basis.excitation(s);
            match found {
                None => found = Some(n),
                Some(m) if m != n => return None,
                _ => {}
            }
        }
    }
    found
}

fn lead_index(v: &CVector) -> usize {
    let max = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    v.iter().position(|c| c.norm() >= max * (1.0 - 1e-9)).unwrap_or(0)
}

fn fix_phase(v: &mut CVector) {
    let c = v[lead_index(v)];
    if c.norm() > 0.0 {
        *v *= c.conj() / c.norm();
    }
}

/// Groups consecutive sorted values closer than `tol`.
fn clusters(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > tol {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Deterministic orthonormal basis of the span of `vecs`: project unit basis
/// vectors in index order and orthonormalize.
fn canonical_basis(vecs: &[CVector]) -> Vec<CVector> {
    let dim = vecs[0].len();
    let mut out: Vec<CVector> = Vec::with_capacity(vecs.len());
    for s in 0..dim {
        if out.len() == vecs.len() {
            break;
        }
        let mut p = CVector::zeros(dim);
        for v in vecs {
            p += v * v[s].conj();
        }
        for u in &out {
            let c = u.dotc(&p);
            p -= u * c;
        }
        let n = p.norm();
        if n > 1e-6 {
            out.push(p / C64::new(n, 0.0));
        }
    }
    out
}

/// Hermitian eigendecomposition of a block, energies ascending.
fn eigen_block(h_block: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let eig = h_block.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    (energies, vecs)
}

/// Diagonalizes block `n_exc` of the full-space Hermitian `h`. Degenerate
/// eigenspaces are given a deterministic canonical basis; with `rates`, they
/// are first rotated to diagonalize the decay operator inside the subspace.
pub fn diagonalize_with(
    basis: &ManifoldBasis,
    h: &CMatrix,
    n_exc: usize,
    rates: Option<&RateModel>,
) -> Result<EigenManifold> {
    if h.nrows() != basis.dim() || h.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: h.nrows(),
        });
    }
    if n_exc > basis.n_atoms() {
        return Err(Error::IndexOutOfRange(format!("excitation block {n_exc}")));
    }
    let h_block = basis.restrict_matrix(h, n_exc);
    let r_block = rates.map(|m| basis.restrict_matrix(m.decay_operator(), n_exc));
    let (energies, vecs) = eigen_block(&h_block);
    let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));

    let mut entries: Vec<(usize, f64, f64, CVector)> = Vec::with_capacity(energies.len());
    for (cid, range) in clusters(&energies, DEGENERACY_REL_TOL * scale).into_iter().enumerate() {
        let sub: Vec<CVector> = vecs[range.clone()].to_vec();
        let mut resolved: Vec<(f64, CVector)> = Vec::new();
        match &r_block {
            Some(r) if sub.len() > 1 => {
                let v = CMatrix::from_columns(&sub);
                let rs = v.adjoint() * r * &v;
                let (rvals, rvecs) = eigen_block(&rs);
                let rotated: Vec<CVector> = rvecs.iter().map(|c| &v * c).collect();
                let rscale = rvals.iter().fold(1.0f64, |m, e| m.max(e.abs()));
                for rr in clusters(&rvals, DEGENERACY_REL_TOL * rscale) {
                    let group = &rotated[rr.clone()];
                    let canon = if group.len() > 1 { canonical_basis(group) } else { group.to_vec() };
                    for (k, u) in canon.into_iter().enumerate() {
                        resolved.push((rvals[rr.start + k], u));
                    }
                }
            }
            _ => {
                let canon = if sub.len() > 1 { canonical_basis(&sub) } else { sub };
                for u in canon {
                    let rate = r_block.as_ref().map_or(0.0, |r| u.dotc(&(r * &u)).re);
                    resolved.push((rate, u));
                }
            }
        }
        for (rate, mut u) in resolved {
            fix_phase(&mut u);
            let e = u.dotc(&(&h_block * &u)).re;
            entries.push((cid, rate, e, u));
        }
    }
    entries.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(lead_index(&a.3).cmp(&lead_index(&b.3)))
    });

    let has_rates = rates.is_some();
    let mut out = EigenManifold {
        n_exc,
        energies: Vec::with_capacity(entries.len()),
        states: Vec::with_capacity(entries.len()),
        rates: has_rates.then(Vec::new),
    };
    for (_, _, e, u) in entries {
        let full = basis.embed_vector(&u, n_exc);
        if let (Some(list), Some(m)) = (out.rates.as_mut(), rates) {
            list.push(m.decay_rate(&full)?);
        }
        out.energies.push(e);
        out.states.push(full);
    }
    Ok(out)
}

/// Diagonalizes block `n_exc` of `h` without reference to dissipation.
pub fn diagonalize(basis: &ManifoldBasis, h: &CMatrix, n_exc: usize) -> Result<EigenManifold> {
    diagonalize_with(basis, h, n_exc, None)
}

fn permutations(n: usize) -> Vec<(Vec<usize>, i32)> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..left.len() {
            let x = left.remove(k);
            prefix.push(x);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(k, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out.into_iter()
        .map(|p| {
            let inversions = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| p[a] > p[b])
                .count();
            let sign = if inversions % 2 == 0 { 1 } else { -1 };
            (p, sign)
        })
        .collect()
}

fn permutation_state(basis: &ManifoldBasis, antisymmetric: bool) -> Result<CVector> {
    let n = basis.n_atoms();
    if basis.n_levels() != n {
        return Err(Error::InvalidArgument(format!(
            "collective states need as many levels as atoms, got {} atoms with {} levels",
            n,
            basis.n_levels()
        )));
    }
    // reference ordering (e₁, e₂, …, e_{N−1}, g) carries sign +1
    let reference: Vec<usize> = (1..n).chain(std::iter::once(0)).collect();
    let perms = permutations(n);
    let norm = 1.0 / (perms.len() as f64).sqrt();
    let mut v = CVector::zeros(basis.dim());
    for (p, sign) in perms {
        let levels: Vec<usize> = p.iter().map(|&k| reference[k]).collect();
        let idx = basis.index_of(&levels).expect("levels are in range");
        let s = if antisymmetric { sign as f64 } else { 1.0 };
        v[idx] += C64::new(s * norm, 0.0);
    }
    Ok(v)
}

/// Totally antisymmetric state `(1/√N!) Σ_π sgn(π) ⊗_i |s_{π(i)}⟩` over
/// the levels `e₁ … e_{N−1}, g`; requires as many levels as atoms.
pub fn dark_state(basis: &ManifoldBasis) -> Result<CVector> {
    permutation_state(basis, true)
}

/// Totally symmetric counterpart of [`dark_state`].
pub fn superradiant_state(basis: &ManifoldBasis) -> Result<CVector> {
    permutation_state(basis, false)
}

/// Exchanges the states of atoms `a` and `b`.
pub fn swap_atoms(basis: &ManifoldBasis, psi: &CVector, a: usize, b: usize) -> CVector {
    let mut out = CVector::zeros(psi.len());
    for s in 0..basis.dim() {
        let mut levels: Vec<usize> = basis.label(s).iter().map(|&l| l as usize).collect();
        levels.swap(a, b);
        out[basis.index_of(&levels).expect("swap preserves range")] = psi[s];
    }
    out
}

/// One eigenstate in the cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeNode {
    pub id: usize,
    pub manifold: usize,
    /// Position inside the manifold's energy ordering.
    pub index: usize,
    pub energy: f64,
    pub total_rate: f64,
    /// Dominant product-state ket.
    pub label: String,
}

/// Directed feeding rate from a node to a node one manifold lower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeEdge {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeGraph {
    pub convention: LindbladConvention,
    pub nodes: Vec<CascadeNode>,
    pub edges: Vec<CascadeEdge>,
    /// Eigenvectors indexed by node id; not serialized.
    #[serde(skip)]
    pub states: Vec<CVector>,
}

impl CascadeGraph {
    pub fn manifold_sizes(&self) -> Vec<usize> {
        let top = self.nodes.iter().map(|n| n.manifold).max().unwrap_or(0);
        (0..=top).map(|m| self.nodes.iter().filter(|n| n.manifold == m).count()).collect()
    }

    pub fn outgoing(&self, id: usize) -> impl Iterator<Item = &CascadeEdge> {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&CascadeEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Node whose eigenvector has the largest overlap with `psi`.
    pub fn closest_node(&self, psi: &CVector) -> Option<(usize, f64)> {
        self.states
            .iter()
            .enumerate()
            .map(|(id, v)| (id, v.dotc(psi).norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Largest `|total_rate − Σ outgoing|` over all nodes.
    pub fn max_balance_error(&self) -> f64 {
        let mut out = vec![0.0; self.nodes.len()];
        for e in &self.edges {
            out[e.from] += e.rate;
        }
        self.nodes
            .iter()
            .map(|n| (n.total_rate - out[n.id]).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// Graphviz rendering; edges below `min_rate` are omitted.
    pub fn to_dot(&self, min_rate: f64) -> String {
        let mut s = String::from("digraph cascade {\n  rankdir=TB;\n");
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "  n{} [label=\"{}\\nE={:.6e}\\nrate={:.6e}\"];",
                n.id, n.label, n.energy, n.total_rate
            );
        }
        for e in self.edges.iter().filter(|e| e.rate >= min_rate) {
            let _ = writeln!(s, "  n{} -> n{} [label=\"{:.6e}\"];", e.from, e.to, e.rate);
        }
        s.push_str("}\n");
        s
    }
}

/// Eigenstates of every manifold linked by their feeding rates.
pub fn cascade_graph(
    basis: &ManifoldBasis,
    ensemble: &Ensemble,
    tensors: &CouplingTensors,
    convention: LindbladConvention,
) -> Result<CascadeGraph> {
    let h = hamiltonian(basis, ensemble, tensors, Frame::Rotating)?;
    let model = RateModel::new(basis, tensors, convention)?;
    let manifolds: Vec<EigenManifold> = (0..=basis.n_atoms())
        .into_par_iter()
        .map(|n| diagonalize_with(basis, &h, n, Some(&model)))
        .collect::<Result<_>>()?;

    let mut nodes = Vec::new();
    let mut states = Vec::new();
    let mut first_id = Vec::new();
    for m in &manifolds {
        first_id.push(nodes.len());
        let rates = m.rates.as_ref().expect("built with rates");
        for (k, v) in m.states.iter().enumerate() {
            nodes.push(CascadeNode {
                id: nodes.len(),
                manifold: m.n_exc,
                index: k,
                energy: m.energies[k],
                total_rate: rates[k],
                label: basis.ket(lead_index(v)),
            });
            states.push(v.clone());
        }
    }

    let mut edges = Vec::new();
    for n in 1..manifolds.len() {
        let (upper, lower) = (&manifolds[n], &manifolds[n - 1]);
        let rows: Vec<Vec<CascadeEdge>> = upper
            .states
            .par_iter()
            .enumerate()
            .map(|(a, u)| {
                lower
                    .states
                    .iter()
                    .enumerate()
                    .map(|(b, l)| CascadeEdge {
                        from: first_id[n] + a,
                        to: first_id[n - 1] + b,
                        rate: model.adjacent_feeding(u, l),
                    })
                    .collect()
            })
            .collect();
        edges.extend(rows.into_iter().flatten());
    }
    Ok(CascadeGraph {
        convention,
        nodes,
        edges,
        states,
    })
}

/// Smallest eigenstate decay rate in manifold `n_exc`, minimized over
/// degenerate energy subspaces.
pub fn lowest_decay_rate(
    ensemble: &Ensemble,
    n_exc: usize,
    convention: LindbladConvention,
) -> Result<f64> {
    let basis = ManifoldBasis::for_ensemble(ensemble, DEFAULT_DIMENSION_CAP)?;
    let tensors = coupling_tensors(ensemble)?;
    let h = hamiltonian(&basis, ensemble, &tensors, Frame::Rotating)?;
    let model = RateModel::new(&basis, &tensors, convention)?;
    let m = diagonalize_with(&basis, &h, n_exc, Some(&model))?;
    Ok(m.rates
        .expect("built with rates")
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}
