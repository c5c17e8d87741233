use std::f64::consts::TAU;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde_json::json;
use subrad_core::couplings::coupling_tensors;
use subrad_core::dynamics::{
    decay_experiment, dissipative_preparation, optimize_phases, phase_axis, preparation_probability,
    pulsed_vs_continuous, pump_sweep, Drive, InitialState, Setup, Trajectory,
};
use subrad_core::geometry::Ensemble;
use subrad_core::hilbert::{CVector, ManifoldBasis};
use subrad_core::spectral::{cascade_graph, dark_state, lowest_decay_rate, superradiant_state, RateModel};

use crate::config::{DriveConfig, Experiment, RunConfig, Target};
use crate::output::{header, with_metadata, Format, Metadata, Outputs, Table};
use crate::{CliError, Command};

pub fn run(command: Command, config: &RunConfig, format: Format) -> Result<Outputs, CliError> {
    let mut meta = Metadata::new();
    meta.insert("command".into(), command.name().into());
    meta.insert("config_sha256".into(), config.hash());
    meta.insert("convention".into(), config.physics.convention.name().into());
    meta.insert("determinism".into(), "no random seeds; identical configs give identical files".into());
    meta.insert("version".into(), format!("subrad {}", env!("CARGO_PKG_VERSION")));
    if let Some(g) = &config.geometry {
        meta.insert("geometry".into(), g.name().into());
    }
    info!("running {} (config {})", command.name(), meta["config_sha256"]);
    match command {
        Command::Couplings => couplings(config, format, meta),
        Command::Cascade => cascade(config, meta),
        Command::LowestRates => lowest_rates(config, format, meta),
        Command::Evolve => evolve(config, format, meta),
        Command::Prepare => prepare(config, format, meta),
        Command::Sweep => sweep(config, format, meta),
        Command::Optimize => optimize(config, format, meta),
        Command::ValidateConfig => Ok(Outputs::default()),
    }
}

fn setup(config: &RunConfig) -> Result<Setup, CliError> {
    Ok(Setup::new(config.ensemble()?, config.physics.convention, config.physics.dimension_cap)?)
}

fn integrator_meta(config: &RunConfig, meta: &mut Metadata) {
    let c = &config.integrator;
    meta.insert("dt".into(), format!("{:e}", c.dt));
    meta.insert("scheme".into(), format!("{:?}", c.scheme));
}

fn target_state(basis: &ManifoldBasis, target: Target) -> Result<CVector, CliError> {
    Ok(match target {
        Target::Dark => dark_state(basis)?,
        Target::Superradiant => superradiant_state(basis)?,
    })
}

fn drive(config: &RunConfig, setup: &Setup) -> Result<(DriveConfig, Drive), CliError> {
    let d = config.section(&config.drive, "drive")?.clone();
    let drive = Drive {
        template: d.template,
        eta: d.eta,
        duration: d.duration,
        target: target_state(&setup.basis, d.target)?,
    };
    Ok((d, drive))
}

fn drive_meta(d: &DriveConfig, meta: &mut Metadata) {
    meta.insert("template".into(), d.template.name().into());
    meta.insert("eta".into(), format!("{:e}", d.eta));
    meta.insert("duration".into(), format!("{:e}", d.duration));
    meta.insert("target".into(), format!("{:?}", d.target).to_lowercase());
}

/// Ω and Γ between every transition pair of a two-atom geometry as atom 2
/// slides along the axis through both atoms.
fn couplings(config: &RunConfig, format: Format, meta: Metadata) -> Result<Outputs, CliError> {
    let scan = config.section(&config.couplings, "couplings")?.values()?;
    let base = config.ensemble()?;
    if base.n_atoms() != 2 {
        return Err(CliError::Config(format!(
            "couplings needs a two-atom geometry, got {} atoms",
            base.n_atoms()
        )));
    }
    let origin = base.atoms[0].position;
    let axis = (base.atoms[1].position - origin).normalize();
    let t = base.n_transitions();
    let mut columns = vec!["k0r".to_string()];
    for j in 1..=t {
        for jp in 1..=t {
            columns.push(format!("omega_{j}{jp}"));
            columns.push(format!("gamma_{j}{jp}"));
        }
    }
    let rows = scan
        .par_iter()
        .map(|&k0r| -> Result<Vec<f64>, CliError> {
            let mut e: Ensemble = base.clone();
            e.atoms[1].position = origin + axis * (k0r * base.reference_wavelength / TAU);
            let tensors = coupling_tensors(&e)?;
            let mut row = vec![k0r];
            for j in 0..t {
                for jp in 0..t {
                    row.push(tensors.omega(0, j, 1, jp));
                    row.push(tensors.gamma(0, j, 1, jp));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = Table { columns, rows };
    let mut out = Outputs::default();
    out.add(format!("couplings.{}", format.extension()), table.render(format, &meta));
    Ok(out)
}

fn cascade(config: &RunConfig, mut meta: Metadata) -> Result<Outputs, CliError> {
    let s = setup(config)?;
    let graph = cascade_graph(&s.basis, &s.ensemble, &s.tensors, s.convention)?;
    let balance = graph.max_balance_error();
    meta.insert("max_balance_error".into(), format!("{balance:e}"));
    meta.insert("nodes".into(), graph.nodes.len().to_string());
    let sizes: Vec<String> = graph.manifold_sizes().iter().map(|n| n.to_string()).collect();
    meta.insert("manifold_sizes".into(), sizes.join(" "));
    println!(
        "cascade: {} nodes, manifolds [{}], max |total - sum of feeding| = {balance:.3e}",
        graph.nodes.len(),
        sizes.join(", ")
    );

    let mut out = Outputs::default();
    let graph_json = serde_json::to_value(&graph).expect("graph serializes");
    out.add("cascade.json", with_metadata(&meta, graph_json));
    let mut dot = header(&meta, "//");
    dot.push_str(&graph.to_dot(config.cascade.dot_min_rate));
    out.add("cascade.dot", dot);

    // N atoms with N − 1 transitions: rows for the two named states
    let b = &s.basis;
    if b.n_transitions() + 1 == b.n_atoms() {
        let model = RateModel::new(b, &s.tensors, s.convention)?;
        let top = b.n_atoms() - 1;
        let mut rows = Vec::new();
        for (name, psi) in [("dark", dark_state(b)?), ("superradiant", superradiant_state(b)?)] {
            let (node, overlap) = graph.closest_node(&psi).expect("graph has nodes");
            rows.push(json!({
                "state": name,
                "node": node,
                "overlap": overlap,
                "total_rate": model.decay_rate(&psi)?,
                "feeding_from": graph.nodes.iter().filter(|n| n.manifold == top + 1)
                    .map(|n| Ok(json!({ "node": n.id, "label": n.label, "rate": model.feeding_rate(&graph.states[n.id], &psi)? })))
                    .collect::<Result<Vec<_>, CliError>>()?,
                "decay_to": graph.nodes.iter().filter(|n| n.manifold + 1 == top)
                    .map(|n| Ok(json!({ "node": n.id, "label": n.label, "rate": model.feeding_rate(&psi, &graph.states[n.id])? })))
                    .collect::<Result<Vec<_>, CliError>>()?,
            }));
        }
        out.add("cascade_summary.json", with_metadata(&meta, json!({ "states": rows })));
    }
    Ok(out)
}

fn lowest_rates(config: &RunConfig, format: Format, meta: Metadata) -> Result<Outputs, CliError> {
    let lr = config.section(&config.lowest_rates, "lowest_rates")?;
    let scan = lr.scan().values()?;
    let mut columns = vec!["k0r".to_string()];
    columns.extend(lr.configurations.iter().map(|c| c.name().to_string()));
    let conv = config.physics.convention;
    let rows = scan
        .par_iter()
        .map(|&k0r| -> Result<Vec<f64>, CliError> {
            let mut row = vec![k0r];
            for c in &lr.configurations {
                let e = c.build(k0r / TAU)?;
                let dim = e.n_levels().pow(e.n_atoms() as u32);
                if dim > config.physics.dimension_cap {
                    return Err(CliError::Capacity(format!(
                        "{} needs dimension {dim}, cap is {}",
                        c.name(),
                        config.physics.dimension_cap
                    )));
                }
                row.push(lowest_decay_rate(&e, e.n_atoms() - 1, conv)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Outputs::default();
    out.add(format!("lowest_rates.{}", format.extension()), Table { columns, rows }.render(format, &meta));
    Ok(out)
}

fn trajectory_table(trajectories: &[(&str, &Trajectory)]) -> Table {
    let mut columns = vec!["t".to_string()];
    for (prefix, t) in trajectories {
        for (name, _) in &t.series {
            columns.push(if prefix.is_empty() { name.clone() } else { format!("{prefix}_{name}") });
        }
    }
    let times = &trajectories[0].1.times;
    let rows = (0..times.len())
        .map(|k| {
            let mut row = vec![times[k]];
            for (_, t) in trajectories {
                row.extend(t.series.iter().map(|(_, v)| v[k]));
            }
            row
        })
        .collect();
    Table { columns, rows }
}

fn evolve(config: &RunConfig, format: Format, mut meta: Metadata) -> Result<Outputs, CliError> {
    let ev = config.section(&config.evolve, "evolve")?;
    let s = setup(config)?;
    integrator_meta(config, &mut meta);
    let cfg = &config.integrator;
    meta.insert("t_final".into(), format!("{:e}", ev.t_final));
    let table = match ev.experiment {
        Experiment::Decay => {
            let name = ev.initial.as_deref().expect("checked by validate");
            let initial = InitialState::from_str(name)?;
            meta.insert("experiment".into(), format!("decay from {name}"));
            trajectory_table(&[("", &decay_experiment(&s, &initial, ev.t_final, cfg)?)])
        }
        Experiment::DissipativePreparation => {
            meta.insert("experiment".into(), "dissipative-preparation".into());
            trajectory_table(&[("", &dissipative_preparation(&s, ev.t_final, cfg)?)])
        }
        Experiment::Pulsed => {
            let (d, drive) = drive(config, &s)?;
            drive_meta(&d, &mut meta);
            let phases = d
                .phases
                .ok_or_else(|| CliError::Config("drive.phases is required for the pulsed experiment".into()))?;
            meta.insert("experiment".into(), "pulsed".into());
            let pump = d.template.pump(d.eta, phases, d.reference_phase);
            let (cont, pulsed) = pulsed_vs_continuous(&s, &pump, d.duration, ev.t_final, &drive.target, cfg)?;
            trajectory_table(&[("continuous", &cont), ("pulsed", &pulsed)])
        }
    };
    let mut out = Outputs::default();
    out.add(format!("evolve.{}", format.extension()), table.render(format, &meta));
    Ok(out)
}

fn prepare(config: &RunConfig, format: Format, mut meta: Metadata) -> Result<Outputs, CliError> {
    let s = setup(config)?;
    let (d, drive) = drive(config, &s)?;
    let phases = d
        .phases
        .ok_or_else(|| CliError::Config("drive.phases is required for prepare".into()))?;
    drive_meta(&d, &mut meta);
    integrator_meta(config, &mut meta);
    let p = preparation_probability(&s, &drive, phases, d.reference_phase, &config.integrator)?;
    let mut table = Table::new(vec!["phi1".into(), "phi2".into(), "reference_phase".into(), "probability".into()]);
    table.push(vec![phases[0], phases[1], d.reference_phase, p]);
    let mut out = Outputs::default();
    out.add(format!("prepare.{}", format.extension()), table.render(format, &meta));
    Ok(out)
}

fn sweep(config: &RunConfig, format: Format, mut meta: Metadata) -> Result<Outputs, CliError> {
    let s = setup(config)?;
    let (d, drive) = drive(config, &s)?;
    drive_meta(&d, &mut meta);
    integrator_meta(config, &mut meta);
    let axis = phase_axis(config.sweep.points);
    let result = pump_sweep(&s, &drive, &axis, &axis, &config.integrator)?;
    let (p1, p2, best) = result.max();
    meta.insert("maximum".into(), format!("{best:.16e} at phi1 = {p1:.16e}, phi2 = {p2:.16e}"));
    let mut table = Table::new(vec!["phi1".into(), "phi2".into(), "probability".into()]);
    for (i1, a) in result.phi1.iter().enumerate() {
        for (i2, b) in result.phi2.iter().enumerate() {
            table.push(vec![*a, *b, result.value(i1, i2)]);
        }
    }
    let mut out = Outputs::default();
    out.add(format!("sweep.{}", format.extension()), table.render(format, &meta));
    Ok(out)
}

fn optimize(config: &RunConfig, format: Format, mut meta: Metadata) -> Result<Outputs, CliError> {
    let s = setup(config)?;
    let (d, drive) = drive(config, &s)?;
    drive_meta(&d, &mut meta);
    integrator_meta(config, &mut meta);
    let r = optimize_phases(&s, &drive, &config.optimize, &config.integrator)?;
    meta.insert("evaluations".into(), r.evaluations.to_string());
    meta.insert("budget_exhausted".into(), r.budget_exhausted.to_string());
    if r.budget_exhausted {
        log::warn!("simplex refinement stopped on its evaluation budget");
    }
    let mut table = Table::new(
        ["phi1", "phi2", "probability", "grid_phi1", "grid_phi2", "grid_probability"]
            .map(String::from)
            .to_vec(),
    );
    table.push(vec![r.phases[0], r.phases[1], r.value, r.grid_phases[0], r.grid_phases[1], r.grid_value]);
    let mut out = Outputs::default();
    out.add(format!("optimize.{}", format.extension()), table.render(format, &meta));
    Ok(out)
}
