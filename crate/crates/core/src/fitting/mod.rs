//! Parameter estimation: Nelder-Mead point fits and SVI posterior fits.

mod nelder_mead;
mod svi;

use nalgebra::{Matrix4, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use self::nelder_mead::{fit_nelder_mead, mean_squared_error, minimize, Minimum, NelderMeadConfig, SimplexOptions};
pub use self::svi::{elbo, elbo_single, fit_svi, Guide, InitLoc, SviConfig, SviModel};

use crate::dataset::Shifts;
use crate::error::{Error, Result};
use crate::tire_model::{ParamBounds, TireParams, N_COEFFS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    NelderMead,
    Svi,
}

impl FitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::NelderMead => "nelder-mead",
            FitMethod::Svi => "svi",
        }
    }
}

/// Fitted guide in unconstrained space, kept so posterior draws can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuideSnapshot {
    /// Indices into (B, C, D, E) of the coefficients the guide covers.
    pub free: Vec<usize>,
    pub loc: Vec<f64>,
    /// Row-major lower-triangular Cholesky factor.
    pub scale_tril: Vec<f64>,
}

/// Estimate of (B, C, D, E) with uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: FitMethod,
    /// Posterior (or point) mean of (B, C, D, E).
    pub mean: [f64; N_COEFFS],
    /// Row-major 4x4 covariance in constrained space; zeros for point estimates.
    pub covariance: Vec<f64>,
    /// Observation noise standard deviation, force-coefficient units.
    pub sigma_noise: f64,
    /// Mean squared residual of the mean curve on the fitted data.
    pub mse: f64,
    pub bounds: ParamBounds,
    pub shifts: Shifts,
    pub fixed_c: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guide: Option<GuideSnapshot>,
    /// Echo of the fitter configuration.
    pub config: serde_json::Value,
}

impl FitResult {
    pub fn params(&self) -> TireParams {
        TireParams::from_coeffs(self.mean, self.shifts.sh, self.shifts.sv)
    }

    pub fn covariance_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.covariance)
    }

    /// Marginal standard deviations of (B, C, D, E).
    pub fn std(&self) -> [f64; N_COEFFS] {
        std::array::from_fn(|k| self.covariance[k * N_COEFFS + k].max(0.0).sqrt())
    }

    pub fn min_covariance_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.covariance_matrix()).eigenvalues.min()
    }

    pub fn without_trace(mut self) -> Self {
        self.trace.clear();
        self
    }
}

/// The coefficients an optimizer is allowed to move.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FreeCoeffs {
    indices: Vec<usize>,
}

impl FreeCoeffs {
    pub(crate) fn new(bounds: &ParamBounds, fixed_c: Option<f64>) -> Result<Self> {
        match fixed_c {
            None => Ok(Self { indices: vec![0, 1, 2, 3] }),
            Some(c) if c.is_finite() && c >= bounds.c.0 && c <= bounds.c.1 => Ok(Self { indices: vec![0, 2, 3] }),
            Some(c) => Err(Error::InvalidConfig(format!(
                "fixed C {c} lies outside its bounds [{}, {}]",
                bounds.c.0, bounds.c.1
            ))),
        }
    }

    pub(crate) fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub(crate) fn project(&self, coeffs: &[f64; N_COEFFS]) -> Vec<f64> {
        self.indices.iter().map(|&k| coeffs[k]).collect()
    }

    /// Write the free values `x` into a copy of `base`.
    pub(crate) fn expand(&self, x: &[f64], base: &[f64; N_COEFFS]) -> [f64; N_COEFFS] {
        let mut out = *base;
        for (&k, &v) in self.indices.iter().zip(x) {
            out[k] = v;
        }
        out
    }
}

/// Draw parameter sets from a fitted SVI posterior.
pub fn posterior_samples<R: Rng + ?Sized>(result: &FitResult, n: usize, rng: &mut R) -> Result<Vec<TireParams>> {
    let guide = result.guide.as_ref().ok_or(Error::NotAPosterior)?;
    let guide = Guide::from_snapshot(guide, result.sigma_noise.ln());
    let lower = result.bounds.lower();
    let width = result.bounds.width();
    Ok((0..n)
        .map(|_| {
            let u = guide.draw(rng);
            let coeffs = guide.constrain(&u, &lower, &width, &result.mean);
            TireParams::from_coeffs(coeffs, result.shifts.sh, result.shifts.sv)
        })
        .collect())
}
