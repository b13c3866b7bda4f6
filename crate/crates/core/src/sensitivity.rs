//! Variance-based sensitivity of the tire curve to (B, C, D, E).
//!
//! Indices come from Saltelli paired matrices `A`, `B`, `AB_i` (A with column
//! `i` from B) and `BA_i` (B with column `i` from A):
//!
//! ```text
//! V_i      = mean( f(B) (f(AB_i) - f(A)) )
//! V_ij^cl  = mean( f(BA_i) f(AB_j) - f(A) f(B) )
//! V_ij     = V_ij^cl - V_i - V_j
//! S_T,i    = (V_i + sum_{j != i} V_ij) / V
//! ```
//!
//! Interactions above second order are not estimated. Outputs are centered on
//! the pooled mean of `f(A)` and `f(B)` before forming products.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::stream_rng;
use crate::tire_model::{evaluate_coeffs, TireParams, N_COEFFS};

/// Output variances below this are treated as zero.
pub const ZERO_VARIANCE: f64 = 1e-14;
/// Smallest accepted base sample count.
pub const MIN_SAMPLES: usize = 1 << 10;

/// Independent uniform ranges for (B, C, D, E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub lower: [f64; N_COEFFS],
    pub upper: [f64; N_COEFFS],
}

impl ParamBox {
    /// `center * (1 -+ fraction)` for every coefficient.
    pub fn around(center: &TireParams, fraction: f64) -> Self {
        Self::around_masked(center, fraction, [true; N_COEFFS])
    }

    /// Like [`ParamBox::around`], with unmasked coefficients frozen at the center.
    pub fn around_masked(center: &TireParams, fraction: f64, varied: [bool; N_COEFFS]) -> Self {
        let c = center.coeffs();
        let f = |k: usize| if varied[k] { fraction } else { 0.0 };
        let a: [f64; N_COEFFS] = std::array::from_fn(|k| c[k] * (1.0 - f(k)));
        let b: [f64; N_COEFFS] = std::array::from_fn(|k| c[k] * (1.0 + f(k)));
        Self {
            lower: std::array::from_fn(|k| a[k].min(b[k])),
            upper: std::array::from_fn(|k| a[k].max(b[k])),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; N_COEFFS] {
        std::array::from_fn(|k| self.lower[k] + (self.upper[k] - self.lower[k]) * rng.random::<f64>())
    }

    /// Variance of each uniform marginal.
    pub fn marginal_variance(&self) -> [f64; N_COEFFS] {
        std::array::from_fn(|k| (self.upper[k] - self.lower[k]).powi(2) / 12.0)
    }
}

/// First-, second-order and total indices at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    pub first_order: [f64; N_COEFFS],
    /// Symmetric, zero diagonal.
    pub second_order: [[f64; N_COEFFS]; N_COEFFS],
    pub total: [f64; N_COEFFS],
    pub variance: f64,
    pub zero_variance: bool,
}

/// Saltelli estimate of the indices of `f` over `bounds` with `n` base samples.
pub fn saltelli_indices<F, R>(f: F, bounds: &ParamBox, n: usize, rng: &mut R) -> SobolEstimate
where
    F: Fn(&[f64; N_COEFFS]) -> f64,
    R: Rng + ?Sized,
{
    let mut fa = Vec::with_capacity(n);
    let mut fb = Vec::with_capacity(n);
    let mut fab = vec![Vec::with_capacity(n); N_COEFFS];
    let mut fba = vec![Vec::with_capacity(n); N_COEFFS];
    for _ in 0..n {
        let a = bounds.sample(rng);
        let b = bounds.sample(rng);
        fa.push(f(&a));
        fb.push(f(&b));
        for i in 0..N_COEFFS {
            let mut ab = a;
            ab[i] = b[i];
            fab[i].push(f(&ab));
            let mut ba = b;
            ba[i] = a[i];
            fba[i].push(f(&ba));
        }
    }

    let nf = n as f64;
    let center = (fa.iter().sum::<f64>() + fb.iter().sum::<f64>()) / (2.0 * nf);
    let variance = fa.iter().chain(&fb).map(|y| (y - center).powi(2)).sum::<f64>() / (2.0 * nf);
    if !(variance >= ZERO_VARIANCE) {
        return SobolEstimate {
            first_order: [0.0; N_COEFFS],
            second_order: [[0.0; N_COEFFS]; N_COEFFS],
            total: [0.0; N_COEFFS],
            variance,
            zero_variance: true,
        };
    }

    let v_first: [f64; N_COEFFS] = std::array::from_fn(|i| {
        (0..n).map(|r| (fb[r] - center) * (fab[i][r] - fa[r])).sum::<f64>() / nf
    });
    let base: f64 = (0..n).map(|r| (fa[r] - center) * (fb[r] - center)).sum::<f64>() / nf;
    let mut v_second = [[0.0; N_COEFFS]; N_COEFFS];
    for i in 0..N_COEFFS {
        for j in i + 1..N_COEFFS {
            let closed = (0..n).map(|r| (fba[i][r] - center) * (fab[j][r] - center)).sum::<f64>() / nf - base;
            let v = closed - v_first[i] - v_first[j];
            v_second[i][j] = v;
            v_second[j][i] = v;
        }
    }

    let first_order = v_first.map(|v| v / variance);
    let second_order = v_second.map(|row| row.map(|v| v / variance));
    let total = std::array::from_fn(|i| first_order[i] + second_order[i].iter().sum::<f64>());
    SobolEstimate { first_order, second_order, total, variance, zero_variance: false }
}

/// Plain Monte-Carlo variance of `f` over `bounds`.
pub fn sample_variance<F, R>(f: F, bounds: &ParamBox, n: usize, rng: &mut R) -> f64
where
    F: Fn(&[f64; N_COEFFS]) -> f64,
    R: Rng + ?Sized,
{
    let ys: Vec<f64> = (0..n).map(|_| f(&bounds.sample(rng))).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64
}

/// Monte-Carlo variance of the tire force at `slip` over the perturbation box.
pub fn total_variance(center: &TireParams, perturbation: f64, slip: f64, n_samples: usize, seed: u64) -> f64 {
    total_variance_in(&ParamBox::around(center, perturbation), slip, n_samples, seed)
}

pub fn total_variance_in(bounds: &ParamBox, slip: f64, n_samples: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0);
    sample_variance(|c| evaluate_coeffs(c, slip), bounds, n_samples, &mut rng)
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

/// 200 log-spaced slip values in `[1e-3, 1]`.
pub fn default_slip_grid() -> Vec<f64> {
    log_grid(1e-3, 1.0, 200)
}

/// Total indices over a slip grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub slip_grid: Vec<f64>,
    /// Total indices (B, C, D, E) per grid point.
    pub total: Vec<[f64; N_COEFFS]>,
    pub first_order: Vec<[f64; N_COEFFS]>,
    pub variance: Vec<f64>,
    pub zero_variance: Vec<bool>,
    pub n_samples: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl SobolResult {
    pub fn len(&self) -> usize {
        self.slip_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slip_grid.is_empty()
    }
}

pub fn sobol_indices(
    center: &TireParams,
    perturbation: f64,
    slip_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<SobolResult> {
    sobol_indices_with(center, perturbation, slip_grid, n_samples, seed, Execution::default())
}

/// Total indices of the unshifted tire curve at each slip value. Grid point `k`
/// draws from RNG stream `k`, so results do not depend on `exec`.
pub fn sobol_indices_with(
    center: &TireParams,
    perturbation: f64,
    slip_grid: &[f64],
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SobolResult> {
    if !(perturbation > 0.0 && perturbation <= 0.5) {
        return Err(Error::InvalidConfig(format!("perturbation {perturbation} must lie in (0, 0.5]")));
    }
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidConfig(format!("n_samples {n_samples} must be at least {MIN_SAMPLES}")));
    }
    if let Some(bad) = slip_grid.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("slip grid value {bad} is not finite")));
    }
    let bounds = ParamBox::around(center, perturbation);
    let estimates = exec.map_indexed(slip_grid.len(), |k| {
        let slip = slip_grid[k];
        let mut rng = stream_rng(seed, k as u64);
        saltelli_indices(|c| evaluate_coeffs(c, slip), &bounds, n_samples, &mut rng)
    });
    Ok(SobolResult {
        slip_grid: slip_grid.to_vec(),
        total: estimates.iter().map(|e| e.total).collect(),
        first_order: estimates.iter().map(|e| e.first_order).collect(),
        variance: estimates.iter().map(|e| e.variance).collect(),
        zero_variance: estimates.iter().map(|e| e.zero_variance).collect(),
        n_samples,
        perturbation,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_has_zero_variance() {
        let r = sobol_indices(&TireParams::reference(), 0.1, &[0.0], MIN_SAMPLES, 1).unwrap();
        assert!(r.zero_variance[0]);
        assert_eq!(r.total[0], [0.0; 4]);
        assert_eq!(total_variance(&TireParams::reference(), 0.1, 0.0, 4096, 3), 0.0);
    }

    #[test]
    fn additive_surrogate() {
        let bounds = ParamBox::around(&TireParams::reference(), 0.1);
        let mut rng = stream_rng(5, 0);
        let est = saltelli_indices(|c| c[0] + 2.0 * c[1], &bounds, 20_000, &mut rng);
        let var = bounds.marginal_variance();
        let total = var[0] + 4.0 * var[1];
        assert!((est.first_order[0] - var[0] / total).abs() < 0.02);
        assert!((est.first_order[1] - 4.0 * var[1] / total).abs() < 0.02);
        assert!(est.first_order[2].abs() < 0.02 && est.first_order[3].abs() < 0.02);
        for row in est.second_order {
            assert!(row.iter().all(|v| v.abs() < 0.02));
        }
    }

    #[test]
    fn single_parameter_variance_matches_quadrature() {
        let center = TireParams::reference();
        let bounds = ParamBox::around_masked(&center, 0.1, [false, false, true, false]);
        let slip = 0.5;
        let mc = total_variance_in(&bounds, slip, 100_000, 9);
        // y = D s with s fixed: Var = s^2 Var(D); Var(D) by midpoint quadrature of (D - mean)^2.
        let s = evaluate_coeffs(&[15.0, 2.0, 1.0, 0.8], slip);
        let (lo, hi) = (bounds.lower[2], bounds.upper[2]);
        let m = 10_000;
        let mean = 0.5 * (lo + hi);
        let var_d: f64 = (0..m)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / m as f64)
            .map(|d| (d - mean).powi(2))
            .sum::<f64>()
            / m as f64;
        let exact = s * s * var_d;
        assert!(((mc - exact) / exact).abs() < 0.02, "{mc} vs {exact}");
    }

    #[test]
    fn variance_stable_across_seeds() {
        let center = TireParams::reference();
        let n = 20_000;
        let vals: Vec<f64> = (0..5).map(|s| total_variance(&center, 0.1, 0.05, n, s)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        // standard error of a sample variance, kurtosis bounded by 3 for this smooth map
        let se = mean * (2.0 / n as f64).sqrt();
        assert!(vals.iter().all(|v| (v - mean).abs() < 3.0 * se * 2.0), "{vals:?}");
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let grid = [0.01, 0.05, 0.3];
        let p = sobol_indices_with(&TireParams::reference(), 0.1, &grid, 2048, 2, Execution::Parallel).unwrap();
        let s = sobol_indices_with(&TireParams::reference(), 0.1, &grid, 2048, 2, Execution::Sequential).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn doubling_samples_shrinks_spread() {
        let center = TireParams::reference();
        let spread = |n: usize| {
            let vals: Vec<f64> = (0..20u64)
                .map(|seed| sobol_indices(&center, 0.1, &[0.05], n, seed).unwrap().total[0][0])
                .collect();
            let m = vals.iter().sum::<f64>() / 20.0;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 19.0).sqrt()
        };
        let ratio = spread(2048) / spread(4096);
        assert!((1.0..2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = TireParams::reference();
        assert!(sobol_indices(&c, 0.0, &[0.1], 4096, 0).is_err());
        assert!(sobol_indices(&c, 0.6, &[0.1], 4096, 0).is_err());
        assert!(sobol_indices(&c, 0.1, &[0.1], 100, 0).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = default_slip_grid();
        assert_eq!(g.len(), 200);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[199] - 1.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
