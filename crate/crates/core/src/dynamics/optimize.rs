use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{phase_axis, preparation_probability, Drive, IntegratorConfig, Setup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Seed grid points per axis over `[0, 2π)`.
    pub grid: usize,
    /// Objective evaluations allowed for the simplex refinement.
    pub max_evaluations: usize,
    /// Converged when the simplex values span less than this.
    pub tolerance: f64,
    /// Initial simplex edge; defaults to half the grid spacing.
    pub initial_step: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid: 9,
            max_evaluations: 200,
            tolerance: 1e-6,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    /// Best phases, wrapped into `[0, 2π)`.
    pub phases: [f64; 2],
    pub value: f64,
    pub grid_phases: [f64; 2],
    pub grid_value: f64,
    pub evaluations: usize,
    /// The refinement stopped on the evaluation budget, not on convergence.
    pub budget_exhausted: bool,
}

/// Outcome of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: [f64; 2],
    pub value: f64,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

/// Maximizes `f` with the Nelder–Mead simplex method starting at `x0`. The
/// returned point is never worse than `x0`.
pub fn nelder_mead<F>(mut f: F, x0: [f64; 2], step: f64, max_evaluations: usize, tolerance: f64) -> Result<SimplexResult>
where
    F: FnMut([f64; 2]) -> Result<f64>,
{
    let mut evals = 0;
    let mut eval = |x: [f64; 2], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    for x in [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]] {
        let v = eval(x, &mut evals)?;
        simplex.push((x, v));
    }
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut exhausted = false;
    loop {
        // best first; stable, so the seed wins ties
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        if simplex[0].1 - simplex[2].1 <= tolerance {
            break;
        }
        if evals + 3 > max_evaluations {
            exhausted = true;
            break;
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let worst = simplex[2];
        let reflected = lerp(worst.0, centroid, 2.0);
        let fr = eval(reflected, &mut evals)?;
        if fr > simplex[0].1 {
            let expanded = lerp(worst.0, centroid, 3.0);
            let fe = eval(expanded, &mut evals)?;
            simplex[2] = if fe > fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr > simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let (towards, fbase) = if fr > worst.1 { (reflected, fr) } else { (worst.0, worst.1) };
            let contracted = lerp(centroid, towards, 0.5);
            let fc = eval(contracted, &mut evals)?;
            if fc > fbase {
                simplex[2] = (contracted, fc);
            } else {
                for k in 1..3 {
                    let x = lerp(simplex[0].0, simplex[k].0, 0.5);
                    simplex[k] = (x, eval(x, &mut evals)?);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(SimplexResult {
        x: simplex[0].0,
        value: simplex[0].1,
        evaluations: evals,
        budget_exhausted: exhausted,
    })
}

/// Coarse phase grid followed by simplex refinement of the best grid point.
pub fn optimize_phases(
    setup: &Setup,
    drive: &Drive,
    optimizer: &OptimizerConfig,
    config: &IntegratorConfig,
) -> Result<OptimizeResult> {
    if optimizer.grid < 2 {
        return Err(Error::InvalidArgument("optimizer grid needs at least two points per axis".into()));
    }
    // drop the duplicated 2π end point
    let mut axis = phase_axis(optimizer.grid + 1);
    axis.pop();
    let n = axis.len();
    let values = (0..n * n)
        .into_par_iter()
        .map(|k| preparation_probability(setup, drive, [axis[k / n], axis[k % n]], 0.0, config))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    let seed = [axis[best / n], axis[best % n]];
    let step = optimizer.initial_step.unwrap_or(0.5 * TAU / n as f64);
    let refined = nelder_mead(
        |x| preparation_probability(setup, drive, x, 0.0, config),
        seed,
        step,
        optimizer.max_evaluations,
        optimizer.tolerance,
    )?;
    let (phases, value) = if refined.value > values[best] {
        (refined.x.map(|p| p.rem_euclid(TAU)), refined.value)
    } else {
        (seed, values[best])
    };
    Ok(OptimizeResult {
        phases,
        value,
        grid_phases: seed,
        grid_value: values[best],
        evaluations: refined.evaluations,
        budget_exhausted: refined.budget_exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_maximum() {
        let f = |x: [f64; 2]| Ok(1.0 - (x[0] - 1.2).powi(2) - 2.0 * (x[1] + 0.4).powi(2));
        let r = nelder_mead(f, [0.0, 0.0], 0.5, 500, 1e-14).unwrap();
        assert!((r.x[0] - 1.2).abs() < 1e-5 && (r.x[1] + 0.4).abs() < 1e-5);
        assert!(!r.budget_exhausted);
    }

    #[test]
    fn constant_objective_returns_seed() {
        let r = nelder_mead(|_| Ok(0.0), [0.3, 0.7], 0.1, 50, 1e-9).unwrap();
        assert_eq!(r.x, [0.3, 0.7]);
        assert_eq!(r.evaluations, 3);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let f = |x: [f64; 2]| Ok(-(x[0] - 5.0).powi(2) - (x[1] - 5.0).powi(2));
        let r = nelder_mead(f, [0.0, 0.0], 0.1, 10, 1e-12).unwrap();
        assert!(r.budget_exhausted);
        assert!(r.value >= -50.0);
    }
}
