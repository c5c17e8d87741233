use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use subrad_core::couplings::coupling_tensors;
use subrad_core::geometry::{Atom, Ensemble, Orthogonality, Transition};
use subrad_core::hilbert::*;
use subrad_core::spectral::{cascade_graph, dark_state, decay_rate, swap_atoms};

/// Three-level atoms with an orthonormal dipole pair at a random orientation.
fn ensemble_strategy(max_atoms: usize) -> impl Strategy<Value = Ensemble> {
    let atom = (
        prop::array::uniform3(-0.3f64..0.3),
        prop::array::uniform3(-3.2f64..3.2),
        0.9f64..1.1,
        0.5f64..1.5,
        0.5f64..1.5,
    );
    prop::collection::vec(atom, 2..=max_atoms).prop_filter_map("atoms too close", |atoms| {
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(p, angles, freq, r1, r2)| {
                let rot = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
                Atom {
                    position: Vector3::from(p),
                    transitions: vec![
                        Transition { frequency: freq, rate: r1, dipole: rot * Vector3::x() },
                        Transition { frequency: 1.0, rate: r2, dipole: rot * Vector3::y() },
                    ],
                }
            })
            .collect();
        Ensemble::new(atoms, 1.0, Orthogonality::Enforced).ok()
    })
}

fn density_matrix(dim: usize, entries: &[(f64, f64)]) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |r, c| {
        let (re, im) = entries[(r * dim + c) % entries.len()];
        C64::new(re + 0.1 * (r as f64 - c as f64), im)
    });
    let m = &a * a.adjoint();
    let tr = m.trace();
    m / tr
}

fn random_state(dim: usize, entries: &[(f64, f64)]) -> CVector {
    let v = CVector::from_fn(dim, |r, _| {
        let (re, im) = entries[r % entries.len()];
        C64::new(re + 0.01 * r as f64, im)
    });
    v.normalize()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dissipator_is_trace_free_and_hermitian(
        e in ensemble_strategy(3),
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16..64),
        literal in any::<bool>(),
    ) {
        let conv = if literal { LindbladConvention::PaperLiteral } else { LindbladConvention::PopulationRate };
        let basis = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let l = Dissipator::new(&basis, &t, conv).unwrap();
        let rho = density_matrix(basis.dim(), &entries);
        let out = l.apply(&rho).unwrap();
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!((&out - out.adjoint()).camax() < 1e-12);
        let n = number_operator(&basis);
        let dn = (&n * &out).trace().re;
        prop_assert!(dn <= 1e-12, "d<N>/dt = {dn}");
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_excitations(e in ensemble_strategy(3), lab in any::<bool>()) {
        let frame = if lab { Frame::Lab } else { Frame::Rotating };
        let basis = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let h = hamiltonian(&basis, &e, &t, frame).unwrap();
        let n = number_operator(&basis);
        let scale = h.camax().max(1.0);
        prop_assert!((&h - h.adjoint()).camax() < 1e-12 * scale);
        prop_assert!((&h * &n - &n * &h).camax() < 1e-12 * scale);
        for block in 0..=basis.n_atoms() {
            let direct = hamiltonian_block(&basis, &e, &t, frame, block).unwrap();
            prop_assert!((direct - basis.restrict_matrix(&h, block)).camax() < 1e-14 * scale);
        }
    }

    #[test]
    fn cascade_rates_balance(e in ensemble_strategy(3), literal in any::<bool>()) {
        let conv = if literal { LindbladConvention::PaperLiteral } else { LindbladConvention::PopulationRate };
        let basis = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let g = cascade_graph(&basis, &e, &t, conv).unwrap();
        prop_assert!(g.max_balance_error() < 1e-9);
        prop_assert!(g.edges.iter().all(|edge| edge.rate >= 0.0));
    }

    #[test]
    fn gamma_tensor_is_symmetric(e in ensemble_strategy(4)) {
        let t = coupling_tensors(&e).unwrap();
        let n = e.n_atoms();
        for i in 0..n {
            for k in 0..n {
                for j in 0..2 {
                    for jp in 0..2 {
                        prop_assert_eq!(t.gamma(i, j, k, jp), t.gamma(k, jp, i, j));
                        prop_assert_eq!(t.omega(i, j, k, jp), t.omega(k, jp, i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn decay_rate_ignores_global_phase(
        e in ensemble_strategy(3),
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4..32),
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        let basis = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP).unwrap();
        let t = coupling_tensors(&e).unwrap();
        let psi = random_state(basis.dim(), &entries);
        let rotated = &psi * C64::from_polar(1.0, phase);
        let conv = LindbladConvention::PopulationRate;
        let a = decay_rate(&basis, &psi, &t, conv).unwrap();
        let b = decay_rate(&basis, &rotated, &t, conv).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= -1e-12);
    }
}

#[test]
fn dark_state_is_antisymmetric_under_every_transposition() {
    let basis = ManifoldBasis::new(3, 3).unwrap();
    let d = dark_state(&basis).unwrap();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let swapped = swap_atoms(&basis, &d, a, b);
        assert!((swapped + &d).camax() < 1e-15);
    }
}
