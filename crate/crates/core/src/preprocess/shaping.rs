//! Dataset shaping before fitting: curve shift estimation and density thinning.

use std::collections::HashMap;

use crate::dataset::{AxleDataset, Shifts};
use crate::error::{Error, Result};

/// Minimum number of linear-region samples needed for [`estimate_shifts`].
pub const MIN_LINEAR_SAMPLES: usize = 50;

/// Estimate curve shifts from the linear region `|excitation| < linear_cut`.
///
/// An ordinary least-squares line `a x + b` is fitted; its zero crossing sits at
/// `X = -Sh`, so `Sh = b / a`. `Sv` is fixed at zero since a line cannot separate
/// the two shifts.
pub fn estimate_shifts(dataset: &AxleDataset, linear_cut: f64) -> Result<Shifts> {
    let linear: Vec<(f64, f64)> = dataset
        .samples
        .iter()
        .filter(|s| s.excitation.abs() < linear_cut)
        .map(|s| (s.excitation, s.force_coeff))
        .collect();
    if linear.len() < MIN_LINEAR_SAMPLES {
        return Err(Error::InsufficientLinearData { found: linear.len(), required: MIN_LINEAR_SAMPLES });
    }
    let n = linear.len() as f64;
    let mx = linear.iter().map(|p| p.0).sum::<f64>() / n;
    let my = linear.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = linear.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = linear.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    if !(slope.abs() >= 1e-6) {
        return Err(Error::DegenerateSlope(slope));
    }
    let intercept = my - slope * mx;
    Ok(Shifts { sh: intercept / slope, sv: 0.0 })
}

/// Greedy order-preserving thinning in (excitation, force) space scaled to unit ranges.
///
/// A sample is kept iff no previously kept sample lies closer than `radius`.
pub fn thin_nearest_neighbor(dataset: &AxleDataset, radius: f64) -> AxleDataset {
    let samples = &dataset.samples;
    if samples.is_empty() || !(radius > 0.0) {
        return dataset.clone();
    }
    let range = |f: fn(&crate::dataset::Sample) -> f64| {
        let (lo, hi) = samples.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        (lo, if span > 0.0 { span } else { 1.0 })
    };
    let (x0, xs) = range(|s| s.excitation);
    let (y0, ys) = range(|s| s.force_coeff);
    let r2 = radius * radius;

    let mut grid: HashMap<(i64, i64), Vec<(f64, f64)>> = HashMap::new();
    let mut kept = Vec::new();
    for s in samples {
        let p = ((s.excitation - x0) / xs, (s.force_coeff - y0) / ys);
        let cell = ((p.0 / radius).floor() as i64, (p.1 / radius).floor() as i64);
        let crowded = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                let key = (cell.0.saturating_add(dx), cell.1.saturating_add(dy));
                grid.get(&key).is_some_and(|pts| {
                    pts.iter().any(|q| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) < r2)
                })
            })
        });
        if !crowded {
            grid.entry(cell).or_default().push(p);
            kept.push(*s);
        }
    }
    AxleDataset { samples: kept, ..dataset.clone() }
}
