//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subrad_core::couplings::{coupling_tensors, kernels, kernels_direct, SERIES_THRESHOLD};
use subrad_core::dynamics::*;
use subrad_core::geometry::*;
use subrad_core::hilbert::*;
use subrad_core::spectral::*;
use subrad_core::Result;

type Outcome = Result<(bool, String)>;

/// Independent closed form of the imaginary parallel kernel.
fn p_i(x: f64) -> f64 {
    x.sin() / x + x.cos() / (x * x) - x.sin() / (x * x * x)
}

fn criterion_1() -> Outcome {
    let tiny = kernels(1e-9)?;
    let below = kernels(SERIES_THRESHOLD * (1.0 - 1e-12))?;
    let direct = kernels_direct(1e-2);
    let at_pi = kernels(PI)?;
    let e_limit = (tiny.p_i - 2.0 / 3.0).abs().max(tiny.q_i.abs());
    let e_switch = (below.p_i - direct.p_i).abs().max((below.q_i - direct.q_i).abs());
    let e_pi = (at_pi.p_i + 1.0 / (PI * PI)).abs();
    Ok((
        e_limit < 1e-12 && e_switch < 1e-10 && e_pi < 1e-12,
        format!("limit err {e_limit:.2e}, switch-over err {e_switch:.2e}, P_I(pi) err {e_pi:.2e}"),
    ))
}

fn criterion_2() -> Outcome {
    let basis = ManifoldBasis::new(2, 2)?;
    let dark = dark_state(&basis)?;
    let bright = superradiant_state(&basis)?;
    let mut worst_sum = 0.0f64;
    for k in 0..60 {
        let d = 1e-3 * 1.1f64.powi(k);
        let e = make_pair(d, &DipoleScheme::Parallel)?;
        let t = coupling_tensors(&e)?;
        let model = RateModel::new(&basis, &t, LindbladConvention::PopulationRate)?;
        let sum = model.decay_rate(&dark)? + model.decay_rate(&bright)?;
        worst_sum = worst_sum.max((sum - 2.0).abs());
    }
    let e = make_pair(1.0 / 50.0, &DipoleScheme::Parallel)?;
    let t = coupling_tensors(&e)?;
    let lowest = lowest_decay_rate(&e, 1, LindbladConvention::PopulationRate)?;
    let closed = 1.0 - 1.5 * p_i(TAU / 50.0);
    let rel = (lowest - closed).abs() / closed;
    let via_dark = decay_rate(&basis, &dark, &t, LindbladConvention::PopulationRate)?;
    Ok((
        worst_sum < 1e-12 && rel < 1e-6 && (via_dark - closed).abs() / closed < 1e-6,
        format!("max |sum - 2| {worst_sum:.2e}; subradiant {lowest:.6e} vs closed form {closed:.6e} (rel {rel:.2e})"),
    ))
}

fn triangle(k0r: f64) -> Result<(Ensemble, ManifoldBasis, CMatrix, RateModel)> {
    let e = make_triangle(k0r / TAU, true)?;
    let t = coupling_tensors(&e)?;
    let b = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP)?;
    let h = hamiltonian(&b, &e, &t, Frame::Rotating)?;
    let m = RateModel::new(&b, &t, LindbladConvention::PopulationRate)?;
    Ok((e, b, h, m))
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for k0r in [0.1, 0.5, 1.0] {
        let (_, b, h, m) = triangle(k0r)?;
        let dark = dark_state(&b)?;
        let bright = superradiant_state(&b)?;
        let e_d = dark.dotc(&(&h * &dark)).re;
        let e_sr = bright.dotc(&(&h * &bright)).re;
        let res_d = (&h * &dark - &dark * C64::new(e_d, 0.0)).norm();
        let res_sr = (&h * &bright - &bright * C64::new(e_sr, 0.0)).norm();
        let man = diagonalize_with(&b, &h, 2, Some(&m))?;
        let lowest = man.states[0].dotc(&dark).norm_sqr();
        let highest = man.states[man.len() - 1].dotc(&bright).norm_sqr();
        let pass = res_d < 1e-10 && res_sr < 1e-10 && lowest > 1.0 - 1e-10 && highest > 1.0 - 1e-10;
        ok &= pass;
        let rank_d = man.energies.iter().filter(|&&x| x < e_d - 1e-9).count();
        let rank_sr = man.energies.iter().filter(|&&x| x < e_sr - 1e-9).count();
        notes.push(format!(
            "k0r={k0r}: residuals {res_d:.1e}/{res_sr:.1e}, dark energy rank {rank_d}/11, superradiant rank {rank_sr}/11"
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for k0r in [0.1, 0.5, 1.0] {
        let (_, b, _, m) = triangle(k0r)?;
        let targets = [dark_state(&b)?, superradiant_state(&b)?];
        for lv in [1, 2] {
            let upper = b.product_state(&[lv, lv, lv])?;
            for t in &targets {
                worst = worst.max(m.feeding_rate(&upper, t)?.abs());
            }
        }
    }
    Ok((worst < 1e-10, format!("max |feeding| {worst:.2e}")))
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut sizes = Vec::new();
    for k0r in [0.1, 0.5, 1.0] {
        let (e, b, _, _) = triangle(k0r)?;
        let t = coupling_tensors(&e)?;
        let g = cascade_graph(&b, &e, &t, LindbladConvention::PopulationRate)?;
        worst = worst.max(g.max_balance_error());
        sizes = g.manifold_sizes();
    }
    Ok((
        worst < 1e-9 && sizes == vec![1, 6, 12, 8],
        format!("27 nodes per graph (manifolds {sizes:?}), max balance error {worst:.2e}"),
    ))
}

fn criterion_6() -> Outcome {
    let d = 0.05 / TAU;
    let chain = lowest_decay_rate(&make_dark_chain(3, d)?, 2, LindbladConvention::PopulationRate)?;
    let tri = lowest_decay_rate(&make_triangle(d, true)?, 2, LindbladConvention::PopulationRate)?;
    Ok((
        chain < 0.02 && (0.9..=1.1).contains(&tri),
        format!("chain {chain:.4e} (< 0.02), triangle {tri:.4} (in [0.9, 1.1])"),
    ))
}

fn single_atom_excited(dt: f64) -> Result<f64> {
    let atom = Atom {
        position: Vector3::zeros(),
        transitions: vec![Transition::degenerate(Vector3::z())],
    };
    let e = Ensemble::new(vec![atom], 1.0, Orthogonality::Enforced)?;
    let setup = Setup::new(e, LindbladConvention::PopulationRate, DEFAULT_DIMENSION_CAP)?;
    let ex = setup.basis.product_state(&[1])?;
    let probe = Probe::new().target("e", ex.clone());
    let cfg = IntegratorConfig {
        stability_limit: None,
        ..IntegratorConfig::with_dt(dt)
    };
    let traj = evolve(&DensityMatrix::pure(&ex)?, &setup.hamiltonian, &setup.dissipator, 1.0, &cfg, &probe)?;
    Ok(traj.last("e").expect("probed"))
}

fn criterion_7() -> Outcome {
    let exact = (-1.0f64).exp();
    let err = (single_atom_excited(1e-3)? - exact).abs();
    let e1 = (single_atom_excited(0.1)? - exact).abs();
    let e2 = (single_atom_excited(0.05)? - exact).abs();
    let ratio = e1 / e2;

    let cfg = IntegratorConfig::default().sampled(0.01);
    let mut drift = 0.0f64;
    let mut negativity = 0.0f64;
    let mut track = |t: &Trajectory| {
        drift = drift.max(t.max_trace_drift());
        negativity = negativity.min(t.min_eigenvalue());
    };
    let chain50 = Setup::new(make_dark_chain(3, 1.0 / 50.0)?, LindbladConvention::PopulationRate, DEFAULT_DIMENSION_CAP)?;
    for s in [
        InitialState::Dark,
        InitialState::Superradiant,
        InitialState::ProductUnpolarized,
        InitialState::TripleExcited,
    ] {
        track(&decay_experiment(&chain50, &s, 5.0, &cfg)?);
    }
    let chain20 = Setup::new(make_dark_chain(3, 1.0 / 20.0)?, LindbladConvention::PopulationRate, DEFAULT_DIMENSION_CAP)?;
    track(&dissipative_preparation(&chain20, 5.0, &cfg)?);
    let pump = PumpTemplate::PerTransition.pump(10.0, [0.7 * PI, 0.7 * PI], 0.0);
    let (cont, pulsed) = pulsed_vs_continuous(&chain50, &pump, 0.3, 2.0, &dark_state(&chain50.basis)?, &cfg)?;
    track(&cont);
    track(&pulsed);
    let tri50 = Setup::new(make_triangle(1.0 / 50.0, true)?, LindbladConvention::PopulationRate, DEFAULT_DIMENSION_CAP)?;
    let pump = PumpTemplate::PerAtom.pump(8.5, [PI / 3.0, PI / 3.0], 0.0);
    let (cont, _) = pulsed_vs_continuous(&tri50, &pump, 0.3, 0.6, &superradiant_state(&tri50.basis)?, &cfg)?;
    track(&cont);

    Ok((
        err < 1e-6 && (8.0..=32.0).contains(&ratio) && drift < 1e-7 && negativity > -1e-7,
        format!(
            "exp error {err:.2e}, RK4 halving ratio {ratio:.2}, max trace drift {drift:.2e}, min eigenvalue {negativity:.2e}"
        ),
    ))
}

fn criterion_8() -> Outcome {
    let cap = DEFAULT_DIMENSION_CAP;
    let cfg = IntegratorConfig::default();
    let chain_geom = make_dark_chain(3, 1.0 / 50.0)?;
    let first = |conv: LindbladConvention| -> Result<f64> {
        let s = Setup::new(chain_geom.clone(), conv, cap)?;
        let drive = Drive {
            template: PumpTemplate::PerAtom,
            eta: 8.5,
            duration: 0.3,
            target: dark_state(&s.basis)?,
        };
        preparation_probability(&s, &drive, [PI / 2.0, PI], 0.0, &cfg)
    };
    let p_pop = first(LindbladConvention::PopulationRate)?;
    let p_lit = first(LindbladConvention::PaperLiteral)?;
    let conv = if (p_lit - 0.20).abs() < (p_pop - 0.20).abs() - 1e-12 {
        LindbladConvention::PaperLiteral
    } else {
        LindbladConvention::PopulationRate
    };
    let p1 = if conv == LindbladConvention::PaperLiteral { p_lit } else { p_pop };
    let ok1 = (p1 - 0.20).abs() <= 0.03;

    let tri = Setup::new(make_triangle(1.0 / 50.0, true)?, conv, cap)?;
    let drive = Drive {
        template: PumpTemplate::PerAtom,
        eta: 8.5,
        duration: 0.3,
        target: superradiant_state(&tri.basis)?,
    };
    let axis = phase_axis(41);
    let sweep = pump_sweep(&tri, &drive, &axis, &axis, &cfg)?;
    let (m1, m2, p2) = sweep.max();
    let ok2 = (p2 - 0.30).abs() <= 0.03;

    let chain = Setup::new(chain_geom, conv, cap)?;
    let dark = dark_state(&chain.basis)?;
    let drive = Drive {
        template: PumpTemplate::PerTransition,
        eta: 10.0,
        duration: 0.3,
        target: dark.clone(),
    };
    let p3 = preparation_probability(&chain, &drive, [0.7 * PI, 0.7 * PI], 0.0, &cfg)?;
    let ok3 = (p3 - 0.24).abs() <= 0.03;

    let pump = PumpTemplate::PerTransition.pump(10.0, [0.7 * PI, 0.7 * PI], 0.0);
    let (_, pulsed) = pulsed_vs_continuous(&chain, &pump, 0.3, 1.0, &dark, &cfg.clone().sampled(0.005))?;
    let series = pulsed.get("target").expect("probed");
    let found = peaks(&pulsed.times, series);
    let p4 = found.get(1).map(|p| p.1).unwrap_or(f64::NAN);
    let ok4 = (p4 - 0.15).abs() <= 0.03;

    Ok((
        ok1 && ok2 && ok3 && ok4,
        format!(
            "convention {} (population-rate {p_pop:.3e}, paper-literal {p_lit:.3e}); chain dark {p1:.3e} vs 0.20; \
             triangle max {p2:.3e} at ({m1:.3}, {m2:.3}) vs 0.30; per-transition {p3:.3e} vs 0.24; \
             pulsed: {} peaks, first [{}], second {p4:.3e} vs 0.15",
            conv.name(),
            found.len(),
            found
                .iter()
                .take(2)
                .map(|(t, p)| format!("t={t:.3}: {p:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ))
}

fn criterion_9() -> Outcome {
    let s = Setup::new(make_dark_chain(3, 1.0 / 20.0)?, LindbladConvention::PopulationRate, DEFAULT_DIMENSION_CAP)?;
    let traj = dissipative_preparation(&s, 5.0, &IntegratorConfig::default().sampled(0.05))?;
    let dark = traj.get("dark").expect("probed");
    let start = dark[0];
    let max = dark.iter().copied().fold(f64::MIN, f64::max);
    let end_dark = traj.last("dark").expect("probed");
    let end_sr = traj.last("superradiant").expect("probed");
    let ok = (start - 1.0 / 6.0).abs() < 1e-9 && max > start && end_dark >= 10.0 * end_sr;
    Ok((
        ok,
        format!(
            "initial dark fraction {start:.3e} (expected 1/6), max {max:.4e}, at t=5 dark {end_dark:.3e} vs superradiant {end_sr:.3e}"
        ),
    ))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            return v.normalize();
        }
    }
}

/// Column-major vectorized Lindblad generator built with Kronecker products.
fn dense_liouvillian(b: &ManifoldBasis, h: &CMatrix, gamma: &DMatrix<f64>, weight: f64) -> Result<CMatrix> {
    let d = b.dim();
    let id = CMatrix::identity(d, d);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * C64::new(0.0, -1.0);
    let ops: Vec<CMatrix> = (0..b.n_atoms())
        .flat_map(|i| (0..b.n_transitions()).map(move |j| (i, j)))
        .map(|(i, j)| sigma_minus(b, i, j))
        .collect::<Result<_>>()?;
    for (a, sa) in ops.iter().enumerate() {
        for (c, sb) in ops.iter().enumerate() {
            let g = weight * gamma[(a, c)];
            if g == 0.0 {
                continue;
            }
            let hop = sa.adjoint() * sb;
            l += (sb.map(|x| x.conj()).kronecker(sa) * C64::new(2.0, 0.0)
                - id.kronecker(&hop)
                - hop.transpose().kronecker(&id))
                * C64::new(g, 0.0);
        }
    }
    Ok(l)
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let atoms: Vec<Atom> = (0..2)
        .map(|_| {
            let a = random_unit(&mut rng);
            let r = random_unit(&mut rng);
            let b = (r - a * a.dot(&r)).normalize();
            Atom {
                position: Vector3::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                ),
                transitions: [a, b]
                    .into_iter()
                    .map(|dipole| Transition {
                        frequency: rng.random_range(0.9..1.1),
                        rate: rng.random_range(0.5..1.5),
                        dipole,
                    })
                    .collect(),
            }
        })
        .collect();
    let e = Ensemble::new(atoms, 1.0, Orthogonality::Enforced)?;
    let t = coupling_tensors(&e)?;
    let b = ManifoldBasis::for_ensemble(&e, DEFAULT_DIMENSION_CAP)?;
    let conv = LindbladConvention::PopulationRate;
    let g = cascade_graph(&b, &e, &t, conv)?;
    let h = hamiltonian(&b, &e, &t, Frame::Rotating)?;
    let l = dense_liouvillian(&b, &h, &t.gamma_matrix(), conv.weight())?;
    let d = b.dim();
    let apply = |psi: &CVector| -> CMatrix {
        let rho = psi * psi.adjoint();
        let v = CVector::from_column_slice(rho.as_slice());
        let out = &l * v;
        CMatrix::from_column_slice(d, d, out.as_slice())
    };
    let mut worst = 0.0f64;
    let model = RateModel::new(&b, &t, conv)?;
    for (u, psi) in g.states.iter().enumerate() {
        let lpsi = apply(psi);
        let direct = -psi.dotc(&(&lpsi * psi)).re;
        worst = worst.max((direct - g.nodes[u].total_rate).abs());
        for (w, phi) in g.states.iter().enumerate() {
            if u == w {
                continue;
            }
            let direct = phi.dotc(&(&lpsi * phi)).re;
            let path = match g.edge(u, w) {
                Some(edge) => edge.rate,
                None => model.feeding_rate(psi, phi)?,
            };
            worst = worst.max((direct - path).abs());
        }
    }
    Ok((worst < 1e-10, format!("{} eigenstates, max deviation {worst:.2e}", g.nodes.len())))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("kernel limits", criterion_1),
        ("pair physics", criterion_2),
        ("triangle eigenstates", criterion_3),
        ("supplement zeros", criterion_4),
        ("rate balance", criterion_5),
        ("limiting minimal rates", criterion_6),
        ("integrator correctness", criterion_7),
        ("preparation probabilities", criterion_8),
        ("dissipative preparation", criterion_9),
        ("brute-force oracle equivalence", criterion_10),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {:>2} {name}: {detail} ({:.1?})", k + 1, start.elapsed());
        if !pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
