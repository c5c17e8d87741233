//! Fixed-step RK4 integration of `dρ/dt = i[ρ, H] + L[ρ]` and the
//! experiments built on it.

mod experiments;
mod optimize;

pub use experiments::*;
pub use optimize::*;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{check_normalized, CMatrix, CVector, DensityMatrix, Dissipator, ManifoldBasis, C64};

/// Abort threshold for trace drift and negativity during integration.
pub const DIAGNOSTIC_TOL: f64 = 1e-6;

/// How the coherent part of each segment is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Classical RK4 on the full generator.
    Rk4,
    /// RK4 on the dissipator in the interaction picture of the segment
    /// Hamiltonian (integrating-factor RK4); the unitary part is exact.
    #[default]
    InteractionRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Largest allowed step, in units of 1/Γ_ref.
    pub dt: f64,
    /// Step halvings attempted after a failed diagnostic.
    pub max_halvings: u32,
    /// Spacing of recorded samples; `None` records only segment boundaries.
    pub sample_interval: Option<f64>,
    /// When set, the step is further capped at `limit / (2 ‖G‖_∞)` where `G`
    /// is the part of the generator integrated by RK4.
    pub stability_limit: Option<f64>,
    /// Interaction scheme only: caps the step at `limit / (E_max − E_min)` of
    /// the segment Hamiltonian. The dissipator oscillates at those
    /// frequencies in the interaction picture.
    pub phase_limit: Option<f64>,
    pub scheme: Scheme,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            max_halvings: 3,
            sample_interval: None,
            stability_limit: Some(0.5),
            phase_limit: Some(1.0),
            scheme: Scheme::InteractionRk4,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn sampled(mut self, interval: f64) -> Self {
        self.sample_interval = Some(interval);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(s) = self.sample_interval {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("sample interval must be positive, got {s}")));
            }
        }
        for (name, limit) in [("stability", self.stability_limit), ("phase", self.phase_limit)] {
            if let Some(l) = limit {
                if !(l.is_finite() && l > 0.0) {
                    return Err(Error::InvalidArgument(format!("{name} limit must be positive, got {l}")));
                }
            }
        }
        Ok(())
    }
}

/// `H_eff = H − iK` in sparse form together with the jump term.
pub struct MasterEquation<'a> {
    dim: usize,
    heff: Vec<(usize, usize, C64)>,
    row_bound: f64,
    dissipator: &'a Dissipator,
}

impl<'a> MasterEquation<'a> {
    pub fn new(h: &CMatrix, dissipator: &'a Dissipator) -> Result<Self> {
        let d = dissipator.dim();
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: h.nrows(),
            });
        }
        let mut dense = h.clone();
        for &(r, c, v) in dissipator.anti_entries() {
            dense[(r, c)] -= C64::new(0.0, v);
        }
        let mut heff = Vec::new();
        for c in 0..d {
            for r in 0..d {
                let v = dense[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    heff.push((r, c, v));
                }
            }
        }
        let row_bound = (0..d)
            .map(|r| (0..d).map(|c| dense[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            dim: d,
            heff,
            row_bound,
            dissipator,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-sum bound on `‖H_eff‖`.
    pub fn norm_bound(&self) -> f64 {
        self.row_bound
    }

    /// Writes `dρ/dt` for a Hermitian column-major ρ into `out`; `work` is scratch.
    fn rhs(&self, rho: &[C64], out: &mut [C64], work: &mut [C64]) {
        let d = self.dim;
        work.fill(C64::new(0.0, 0.0));
        for q in 0..d {
            let col = &rho[q * d..(q + 1) * d];
            let acc = &mut work[q * d..(q + 1) * d];
            for &(r, c, v) in &self.heff {
                acc[r] += v * col[c];
            }
        }
        // −i(H_eff ρ − ρ H_eff⁺) = −i(A − A⁺) with A = H_eff ρ
        for c in 0..d {
            for r in 0..d {
                let x = work[c * d + r] - work[r * d + c].conj();
                out[c * d + r] = C64::new(x.im, -x.re);
            }
        }
        self.dissipator.add_jumps(rho, out);
    }

    /// `dρ/dt` as a matrix.
    pub fn derivative(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        let mut work = vec![C64::new(0.0, 0.0); self.dim * self.dim];
        self.rhs(rho.as_slice(), out.as_mut_slice(), &mut work);
        out
    }
}

struct Rk4Buffers {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
    work: Vec<C64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z.clone(),
            work: z,
        }
    }
}

fn rk4_step(eq: &MasterEquation, rho: &mut [C64], h: f64, b: &mut Rk4Buffers) {
    let half = 0.5 * h;
    eq.rhs(rho, &mut b.k1, &mut b.work);
    for i in 0..rho.len() {
        b.tmp[i] = rho[i] + b.k1[i] * half;
    }
    eq.rhs(&b.tmp, &mut b.k2, &mut b.work);
    for i in 0..rho.len() {
        b.tmp[i] = rho[i] + b.k2[i] * half;
    }
    eq.rhs(&b.tmp, &mut b.k3, &mut b.work);
    for i in 0..rho.len() {
        b.tmp[i] = rho[i] + b.k3[i] * h;
    }
    eq.rhs(&b.tmp, &mut b.k4, &mut b.work);
    let sixth = h / 6.0;
    for i in 0..rho.len() {
        rho[i] += (b.k1[i] + (b.k2[i] + b.k3[i]) * 2.0 + b.k4[i]) * sixth;
    }
    hermitize(rho, eq.dim);
}

/// What to record at every sample time.
#[derive(Debug, Clone, Default)]
pub struct Probe {
    /// Named pure states whose fidelity is recorded.
    pub targets: Vec<(String, CVector)>,
    /// Basis used for `pop_n` manifold populations.
    pub manifolds: Option<ManifoldBasis>,
}

impl Probe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn target(mut self, name: impl Into<String>, state: CVector) -> Self {
        self.targets.push((name.into(), state));
        self
    }

    pub fn manifolds(mut self, basis: &ManifoldBasis) -> Self {
        self.manifolds = Some(basis.clone());
        self
    }

    fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.targets.iter().map(|(n, _)| n.clone()).collect();
        if let Some(b) = &self.manifolds {
            names.extend((0..=b.n_atoms()).map(|n| format!("pop_{n}")));
        }
        names.push("trace".into());
        names.push("min_eigenvalue".into());
        names
    }

    fn measure(&self, rho: &CMatrix) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .targets
            .iter()
            .map(|(_, t)| t.dotc(&(rho * t)).re)
            .collect();
        if let Some(b) = &self.manifolds {
            out.extend((0..=b.n_atoms()).map(|n| b.block(n).iter().map(|&s| rho[(s, s)].re).sum::<f64>()));
        }
        out.push(rho.trace().re);
        out.push(rho.symmetric_eigenvalues().min());
        out
    }
}

/// Time series of named observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Observables in recording order.
    pub series: Vec<(String, Vec<f64>)>,
    /// Step size actually used by the last integration segment.
    pub dt: f64,
    #[serde(skip)]
    pub final_state: Option<CMatrix>,
}

impl Trajectory {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Value of `name` at the last sample.
    pub fn last(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|v| v.last().copied())
    }

    /// Value of `name` at the sample closest to `t`.
    pub fn at(&self, name: &str, t: f64) -> Option<f64> {
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        self.get(name).map(|v| v[k])
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.get("trace")
            .map(|v| v.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.get("min_eigenvalue")
            .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
            .unwrap_or(0.0)
    }

    /// CSV with a `t` column followed by one column per observable; each
    /// metadata entry becomes a leading `# key: value` line.
    pub fn to_csv(&self, metadata: &BTreeMap<String, String>) -> String {
        let mut s = String::new();
        for (k, v) in metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push('t');
        for (n, _) in &self.series {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t:.16e}");
            for (_, v) in &self.series {
                let _ = write!(s, ",{:.16e}", v[k]);
            }
            s.push('\n');
        }
        s
    }
}

/// A stretch of time under one Hamiltonian.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub duration: f64,
    pub hamiltonian: &'a CMatrix,
}

/// Sample times: every multiple of the interval plus every segment boundary.
fn sample_times(boundaries: &[f64], interval: Option<f64>) -> Vec<f64> {
    let end = *boundaries.last().unwrap_or(&0.0);
    let mut times = vec![0.0];
    if let Some(dt) = interval {
        let n = (end / dt - 1e-9).floor() as usize;
        times.extend((1..=n).map(|k| k as f64 * dt));
    }
    times.extend_from_slice(boundaries);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    times
}

/// RK4 on `dy/dt = −i[E, y] + V⁺L[V y V⁺]V` in the eigenbasis `H = V E V⁺`,
/// with the diagonal commutator absorbed exactly (Lawson's scheme).
struct InteractionStepper<'a> {
    eq: MasterEquation<'a>,
    v: CMatrix,
    vh: CMatrix,
    energies: Vec<f64>,
    phase_step: f64,
    half: Vec<C64>,
    full: Vec<C64>,
    t1: CMatrix,
    lab: CMatrix,
    dlab: CMatrix,
    work: Vec<C64>,
}

impl<'a> InteractionStepper<'a> {
    fn new(h: &CMatrix, dissipator: &'a Dissipator) -> Result<Self> {
        let d = dissipator.dim();
        let eig = h.clone().symmetric_eigen();
        let v = eig.eigenvectors;
        let zero = CMatrix::zeros(d, d);
        Ok(Self {
            eq: MasterEquation::new(&zero, dissipator)?,
            vh: v.adjoint(),
            v,
            energies: eig.eigenvalues.iter().copied().collect(),
            phase_step: f64::NAN,
            half: vec![C64::new(0.0, 0.0); d * d],
            full: vec![C64::new(0.0, 0.0); d * d],
            t1: zero.clone(),
            lab: zero.clone(),
            dlab: zero,
            work: vec![C64::new(0.0, 0.0); d * d],
        })
    }

    fn set_phases(&mut self, h: f64) {
        if self.phase_step == h {
            return;
        }
        let d = self.energies.len();
        for c in 0..d {
            for r in 0..d {
                let w = self.energies[r] - self.energies[c];
                self.half[c * d + r] = C64::from_polar(1.0, -w * 0.5 * h);
                self.full[c * d + r] = C64::from_polar(1.0, -w * h);
            }
        }
        self.phase_step = h;
    }

    /// Dissipator in the eigenbasis.
    fn f(&mut self, y: &CMatrix, out: &mut CMatrix) {
        self.v.mul_to(y, &mut self.t1);
        self.t1.mul_to(&self.vh, &mut self.lab);
        self.eq.rhs(self.lab.as_slice(), self.dlab.as_mut_slice(), &mut self.work);
        self.vh.mul_to(&self.dlab, &mut self.t1);
        self.t1.mul_to(&self.v, out);
    }

    fn advance(&mut self, rho: &mut CMatrix, h: f64, steps: usize) {
        self.set_phases(h);
        let d = self.energies.len();
        let mut y = &self.vh * &*rho * &self.v;
        let mut k1 = CMatrix::zeros(d, d);
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        for _ in 0..steps {
            self.f(&y, &mut k1);
            for i in 0..d * d {
                tmp[i] = (y[i] + k1[i] * (0.5 * h)) * self.half[i];
            }
            self.f(&tmp, &mut k2);
            for i in 0..d * d {
                tmp[i] = y[i] * self.half[i] + k2[i] * (0.5 * h);
            }
            self.f(&tmp, &mut k3);
            for i in 0..d * d {
                tmp[i] = y[i] * self.full[i] + k3[i] * self.half[i] * h;
            }
            self.f(&tmp, &mut k4);
            for i in 0..d * d {
                y[i] = y[i] * self.full[i]
                    + (k1[i] * self.full[i] + (k2[i] + k3[i]) * self.half[i] * 2.0 + k4[i]) * (h / 6.0);
            }
            hermitize(y.as_mut_slice(), d);
        }
        *rho = &self.v * y * &self.vh;
        hermitize(rho.as_mut_slice(), d);
    }
}

fn hermitize(m: &mut [C64], d: usize) {
    for c in 0..d {
        for r in c..d {
            let avg = (m[c * d + r] + m[r * d + c].conj()) * 0.5;
            m[c * d + r] = avg;
            m[r * d + c] = avg.conj();
        }
    }
}

enum Stepper<'a> {
    Plain(MasterEquation<'a>, Rk4Buffers),
    Interaction(Box<InteractionStepper<'a>>),
}

impl<'a> Stepper<'a> {
    fn new(scheme: Scheme, h: &CMatrix, dissipator: &'a Dissipator) -> Result<Self> {
        Ok(match scheme {
            Scheme::Rk4 => {
                let d = dissipator.dim();
                Stepper::Plain(MasterEquation::new(h, dissipator)?, Rk4Buffers::new(d * d))
            }
            Scheme::InteractionRk4 => Stepper::Interaction(Box::new(InteractionStepper::new(h, dissipator)?)),
        })
    }

    fn bound(&self) -> f64 {
        match self {
            Stepper::Plain(eq, _) => eq.norm_bound(),
            Stepper::Interaction(s) => s.eq.norm_bound(),
        }
    }

    fn spread(&self) -> f64 {
        match self {
            Stepper::Plain(..) => 0.0,
            Stepper::Interaction(s) => {
                let max = s.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = s.energies.iter().copied().fold(f64::INFINITY, f64::min);
                max - min
            }
        }
    }

    fn advance(&mut self, rho: &mut CMatrix, h: f64, steps: usize) {
        match self {
            Stepper::Plain(eq, buffers) => {
                for _ in 0..steps {
                    rk4_step(eq, rho.as_mut_slice(), h, buffers);
                }
            }
            Stepper::Interaction(s) => s.advance(rho, h, steps),
        }
    }
}

fn integrate(
    rho0: &DensityMatrix,
    segments: &[Segment],
    dissipator: &Dissipator,
    config: &IntegratorConfig,
    probe: &Probe,
    dt: f64,
) -> Result<Trajectory> {
    let mut steppers: Vec<Stepper> = segments
        .iter()
        .map(|s| Stepper::new(config.scheme, s.hamiltonian, dissipator))
        .collect::<Result<_>>()?;
    let mut boundaries = Vec::with_capacity(segments.len());
    let mut acc = 0.0;
    for s in segments {
        acc += s.duration;
        boundaries.push(acc);
    }
    let times = sample_times(&boundaries, config.sample_interval);
    let names = probe.names();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); names.len()];
    let mut rho = rho0.matrix().clone();
    let mut used = dt;
    let record = |rho: &CMatrix, t: f64, used: f64, values: &mut Vec<Vec<f64>>| -> Result<()> {
        let m = probe.measure(rho);
        let trace = m[m.len() - 2];
        let min_eig = m[m.len() - 1];
        if (trace - 1.0).abs() > DIAGNOSTIC_TOL || min_eig < -DIAGNOSTIC_TOL || !trace.is_finite() {
            return Err(Error::StepSize {
                time: t,
                dt: used,
                detail: format!("trace {trace:e}, minimum eigenvalue {min_eig:e}"),
            });
        }
        for (v, x) in values.iter_mut().zip(m) {
            v.push(x);
        }
        Ok(())
    };
    record(&rho, 0.0, used, &mut values)?;
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mid = 0.5 * (t0 + t1);
        let seg = boundaries.iter().position(|&b| mid < b).unwrap_or(segments.len() - 1);
        let stepper = &mut steppers[seg];
        let mut h = dt;
        if let Some(limit) = config.stability_limit {
            if stepper.bound() > 0.0 {
                h = h.min(limit / (2.0 * stepper.bound()));
            }
        }
        if let Some(limit) = config.phase_limit {
            if stepper.spread() > 0.0 {
                h = h.min(limit / stepper.spread());
            }
        }
        let steps = ((t1 - t0) / h - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        used = h;
        stepper.advance(&mut rho, h, steps);
        record(&rho, t1, used, &mut values)?;
    }
    Ok(Trajectory {
        times,
        series: names.into_iter().zip(values).collect(),
        dt: used,
        final_state: Some(rho),
    })
}

/// Integrates through consecutive segments, halving `dt` on diagnostic
/// failure up to `config.max_halvings` times.
pub fn evolve_segments(
    rho0: &DensityMatrix,
    segments: &[Segment],
    dissipator: &Dissipator,
    config: &IntegratorConfig,
    probe: &Probe,
) -> Result<Trajectory> {
    config.validate()?;
    if segments.is_empty() {
        return Err(Error::InvalidArgument("no segments to integrate".into()));
    }
    for s in segments {
        if !(s.duration.is_finite() && s.duration > 0.0) {
            return Err(Error::InvalidArgument(format!("segment duration must be positive, got {}", s.duration)));
        }
    }
    if rho0.dim() != dissipator.dim() {
        return Err(Error::DimensionMismatch {
            expected: dissipator.dim(),
            found: rho0.dim(),
        });
    }
    for (_, t) in &probe.targets {
        check_normalized(t)?;
    }
    let mut dt = config.dt;
    let mut attempt = 0;
    loop {
        match integrate(rho0, segments, dissipator, config, probe, dt) {
            Err(Error::StepSize { time, detail, .. }) if attempt < config.max_halvings => {
                debug!("diagnostic failure at t = {time} ({detail}); halving dt = {dt}");
                dt *= 0.5;
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Evolves `rho0` under `h` (already including any pump) for `t_final`.
pub fn evolve(
    rho0: &DensityMatrix,
    h: &CMatrix,
    dissipator: &Dissipator,
    t_final: f64,
    config: &IntegratorConfig,
    probe: &Probe,
) -> Result<Trajectory> {
    evolve_segments(
        rho0,
        &[Segment {
            duration: t_final,
            hamiltonian: h,
        }],
        dissipator,
        config,
        probe,
    )
}

/// `⟨target|ρ|target⟩`.
pub fn fidelity(rho: &DensityMatrix, target: &CVector) -> Result<f64> {
    check_normalized(target)?;
    if target.len() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: target.len(),
        });
    }
    Ok(target.dotc(&(rho.matrix() * target)).re)
}
