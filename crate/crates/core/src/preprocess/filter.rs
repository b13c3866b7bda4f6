//! Smoothing filters with length-preserving edge handling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    MovingAverage,
    SavitzkyGolay,
    Gaussian,
}

/// Filter settings. Even windows are rounded up to the next odd length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Window length in samples.
    pub window: usize,
    /// Polynomial order (Savitzky-Golay only).
    #[serde(default)]
    pub order: usize,
    /// Kernel standard deviation in samples (Gaussian only).
    #[serde(default)]
    pub sigma: f64,
}

impl FilterSpec {
    pub fn savitzky_golay(window: usize, order: usize) -> Self {
        Self { kind: FilterKind::SavitzkyGolay, window, order, sigma: 0.0 }
    }

    pub fn moving_average(window: usize) -> Self {
        Self { kind: FilterKind::MovingAverage, window, order: 0, sigma: 0.0 }
    }

    pub fn gaussian(window: usize, sigma: f64) -> Self {
        Self { kind: FilterKind::Gaussian, window, order: 0, sigma }
    }

    /// Odd window length actually used, at least 3.
    pub fn effective_window(&self) -> usize {
        let w = self.window.max(3);
        if w % 2 == 0 { w + 1 } else { w }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.effective_window();
        match self.kind {
            FilterKind::SavitzkyGolay if self.order >= w => Err(Error::InvalidConfig(format!(
                "Savitzky-Golay order {} must be below window {w}",
                self.order
            ))),
            FilterKind::Gaussian if !(self.sigma > 0.0) => {
                Err(Error::InvalidConfig(format!("Gaussian sigma {} must be positive", self.sigma)))
            }
            _ => Ok(()),
        }
    }

    /// Filter one evenly sampled series.
    pub fn apply(&self, series: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let w = self.effective_window();
        if series.len() < w {
            return Err(Error::SeriesTooShort { len: series.len(), window: w });
        }
        let half = w / 2;
        Ok(match self.kind {
            FilterKind::MovingAverage => convolve_mirrored(series, &vec![1.0 / w as f64; w]),
            FilterKind::Gaussian => {
                let mut kernel: Vec<f64> = (0..w)
                    .map(|i| {
                        let k = i as f64 - half as f64;
                        (-0.5 * k * k / (self.sigma * self.sigma)).exp()
                    })
                    .collect();
                let sum: f64 = kernel.iter().sum();
                kernel.iter_mut().for_each(|k| *k /= sum);
                convolve_mirrored(series, &kernel)
            }
            FilterKind::SavitzkyGolay => savgol(series, half, self.order, 0, 1.0),
        })
    }
}

/// Convenience wrapper over [`FilterSpec::apply`].
pub fn filter_channel(series: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    spec.apply(series)
}

/// Savitzky-Golay first derivative of a series sampled every `dt` seconds.
pub fn savgol_derivative(series: &[f64], window: usize, order: usize, dt: f64) -> Result<Vec<f64>> {
    let spec = FilterSpec::savitzky_golay(window, order.max(2));
    spec.validate()?;
    let w = spec.effective_window();
    if series.len() < w {
        return Err(Error::SeriesTooShort { len: series.len(), window: w });
    }
    Ok(savgol(series, w / 2, spec.order, 1, dt))
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
    j as usize
}

fn convolve_mirrored(series: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = series.len();
    let half = (kernel.len() / 2) as isize;
    (0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * series[reflect(i + k as isize - half, n)])
                .sum()
        })
        .collect()
}

/// Least-squares weights over a window `-half..=half` that evaluate the fitted
/// polynomial (or its first derivative) at offset `at`.
fn savgol_weights(half: usize, order: usize, at: isize, deriv: usize) -> Vec<f64> {
    let w = 2 * half + 1;
    let scale = half as f64;
    let basis = DMatrix::from_fn(w, order + 1, |r, k| ((r as f64 - scale) / scale).powi(k as i32));
    let gram = basis.transpose() * &basis;
    let s0 = at as f64 / scale;
    let target = DVector::from_fn(order + 1, |k, _| match deriv {
        0 => s0.powi(k as i32),
        _ if k == 0 => 0.0,
        _ => k as f64 * s0.powi(k as i32 - 1) / scale,
    });
    let z = gram
        .cholesky()
        .expect("Savitzky-Golay normal matrix is positive definite for order < window")
        .solve(&target);
    (basis * z).iter().copied().collect()
}

fn savgol(series: &[f64], half: usize, order: usize, deriv: usize, dt: f64) -> Vec<f64> {
    let n = series.len();
    let w = 2 * half + 1;
    let norm = if deriv == 0 { 1.0 } else { 1.0 / dt };
    let dot = |weights: &[f64], start: usize| -> f64 {
        weights.iter().zip(&series[start..start + w]).map(|(a, b)| a * b).sum::<f64>() * norm
    };
    let center = savgol_weights(half, order, 0, deriv);
    let mut out = vec![0.0; n];
    for i in half..n - half {
        out[i] = dot(&center, i - half);
    }
    // Edges evaluate the polynomial fitted to the first/last full window.
    for i in 0..half {
        let head = savgol_weights(half, order, i as isize - half as isize, deriv);
        out[i] = dot(&head, 0);
        let tail = savgol_weights(half, order, half as isize - i as isize, deriv);
        out[n - 1 - i] = dot(&tail, n - w);
    }
    out
}
