//! Bounded Nelder-Mead least-squares fit.

use serde::{Deserialize, Serialize};

use super::{FitMethod, FitResult, FreeCoeffs};
use crate::dataset::AxleDataset;
use crate::error::{Error, Result};
use crate::tire_model::{evaluate_coeffs, ParamBounds, TireParams, N_COEFFS};

/// Weight of the quadratic penalty applied outside the bounds box.
const BOUNDARY_PENALTY: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadConfig {
    pub bounds: ParamBounds,
    /// Starting point; the bounds-box midpoint when absent. Clamped into the box.
    pub init: Option<TireParams>,
    /// Pin the shape factor C to this value.
    pub fixed_c: Option<f64>,
    pub max_iterations: usize,
    /// Stop when every vertex lies within this distance of the best one.
    pub x_tolerance: f64,
    /// Stop when the objective spread across the simplex falls below this.
    pub f_tolerance: f64,
    /// Restarts from the best vertex after convergence, to escape collapsed simplices.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            bounds: ParamBounds::default(),
            init: None,
            fixed_c: None,
            max_iterations: 10_000,
            x_tolerance: 1e-8,
            f_tolerance: 1e-12,
            restarts: 5,
        }
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best objective value after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    pub x_tolerance: f64,
    pub f_tolerance: f64,
    pub restarts: usize,
}

/// Minimize `f` from `x0` with an axis-aligned initial simplex of the given step sizes.
///
/// Vertices with equal objective values keep their relative order, so the one
/// created earlier is preferred.
pub fn minimize<F>(f: F, x0: &[f64], steps: &[f64], opts: SimplexOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut best_x = x0.to_vec();
    let mut best_f = f(x0);
    let mut converged = false;

    for round in 0..=opts.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..n {
            let mut v = best_x.clone();
            v[i] += steps[i];
            let fv = f(&v);
            simplex.push((v, fv));
        }
        let start_f = best_f;
        converged = false;

        while iterations < opts.max_iterations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            if diameter < opts.x_tolerance || spread < opts.f_tolerance {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
            };

            let xr = along(1.0);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = f(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(0.5);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = f(&xc);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for (v, fv) in simplex.iter_mut().skip(1) {
                        v.iter_mut().zip(&best).for_each(|(a, b)| *a = b + 0.5 * (*a - b));
                        *fv = f(v);
                    }
                }
            }
            let current = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            trace.push(current.min(trace.last().copied().unwrap_or(f64::INFINITY)));
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f || round == 0 {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        let improved = start_f - best_f;
        if iterations >= opts.max_iterations || (round > 0 && !(improved > opts.f_tolerance)) {
            break;
        }
    }

    Minimum { x: best_x, value: best_f, trace, iterations, converged }
}

/// Weighted mean squared error of the curve against the dataset.
pub fn mean_squared_error(dataset: &AxleDataset, coeffs: &[f64; N_COEFFS]) -> f64 {
    let sh = dataset.shifts.sh;
    let sv = dataset.shifts.sv;
    let (num, den) = dataset.samples.iter().fold((0.0, 0.0), |(num, den), s| {
        let r = s.force_coeff - evaluate_coeffs(coeffs, s.excitation + sh) - sv;
        (num + s.weight * r * r, den + s.weight)
    });
    if den > 0.0 { num / den } else { 0.0 }
}

fn boundary_penalty(bounds: &ParamBounds, coeffs: &[f64; N_COEFFS]) -> f64 {
    coeffs
        .iter()
        .zip(bounds.pairs())
        .map(|(&v, (lo, hi))| {
            let out = (lo - v).max(0.0) + (v - hi).max(0.0);
            (out / (hi - lo)).powi(2)
        })
        .sum::<f64>()
        * BOUNDARY_PENALTY
}

/// Least-squares point estimate of (B, C, D, E).
pub fn fit_nelder_mead(dataset: &AxleDataset, config: &NelderMeadConfig) -> Result<FitResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.bounds.validate()?;
    let free = FreeCoeffs::new(&config.bounds, config.fixed_c)?;
    let start = config
        .init
        .map(|p| p.coeffs())
        .unwrap_or_else(|| config.bounds.midpoint());
    let mut start = config.bounds.clamp(&start);
    if let Some(c) = config.fixed_c {
        start[1] = c;
    }
    let x0 = free.project(&start);
    let widths = config.bounds.width();
    let steps: Vec<f64> = free.indices().iter().map(|&k| 0.1 * widths[k]).collect();

    let objective = |x: &[f64]| {
        let coeffs = free.expand(x, &start);
        mean_squared_error(dataset, &coeffs) + boundary_penalty(&config.bounds, &coeffs)
    };
    let opts = SimplexOptions {
        max_iterations: config.max_iterations,
        x_tolerance: config.x_tolerance,
        f_tolerance: config.f_tolerance,
        restarts: config.restarts,
    };
    let min = minimize(objective, &x0, &steps, opts);
    let mean = config.bounds.clamp(&free.expand(&min.x, &start));
    let mse = mean_squared_error(dataset, &mean);

    Ok(FitResult {
        method: FitMethod::NelderMead,
        mean,
        covariance: [0.0; N_COEFFS * N_COEFFS].to_vec(),
        sigma_noise: mse.sqrt(),
        mse,
        bounds: config.bounds,
        shifts: dataset.shifts,
        fixed_c: config.fixed_c,
        iterations: min.iterations,
        converged: min.converged,
        trace: min.trace,
        guide: None,
        config: serde_json::to_value(config).expect("config serializes"),
    })
}
