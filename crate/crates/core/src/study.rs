//! Simulative excitation study: fit synthetic curves truncated at increasing
//! slip levels and track how well each coefficient is identified.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{AxleDataset, Sample};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fitting::{fit_nelder_mead, fit_svi, FitMethod, FitResult, NelderMeadConfig, SviConfig};
use crate::rng::stream_rng;
use crate::tire_model::{ParamBounds, TireParams, N_COEFFS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub truth: TireParams,
    /// Maximum slip of each dataset, ascending in (0, 1].
    pub excitation_levels: Vec<f64>,
    /// Samples per level, identical across levels.
    pub n_points: usize,
    /// Standard deviation of the noise added to recorded slip.
    pub noise_slip: f64,
    /// Standard deviation of the noise added to the force coefficient.
    pub noise_force: f64,
    pub seed: u64,
    pub svi: SviConfig,
    /// Bounds for both fitters; overrides `svi.bounds`.
    pub bounds: ParamBounds,
    /// Levels for which dense fitted curves are exported.
    pub highlight_levels: Vec<f64>,
    /// Points of the noiseless reference grid on [0, 1] used for the MSE.
    pub reference_points: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            truth: TireParams::reference(),
            excitation_levels: vec![0.01, 0.02, 0.04, 0.06, 0.08, 0.10, 0.15, 0.20, 0.30, 0.50, 0.75, 1.00],
            n_points: 500,
            noise_slip: 0.002,
            noise_force: 0.02,
            seed: 0,
            svi: SviConfig::default(),
            bounds: ParamBounds::default(),
            highlight_levels: vec![0.02, 0.08, 0.75],
            reference_points: 1001,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidConfig(m));
        if self.excitation_levels.is_empty() {
            return err("excitation_levels must not be empty".into());
        }
        if let Some(l) = self.excitation_levels.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return err(format!("excitation level {l} outside (0, 1]"));
        }
        if self.excitation_levels.windows(2).any(|w| !(w[1] > w[0])) {
            return err("excitation_levels must be strictly ascending".into());
        }
        if self.n_points < 2 {
            return err("n_points must be at least 2".into());
        }
        if !(self.noise_slip >= 0.0 && self.noise_force >= 0.0) {
            return err("noise levels must be non-negative".into());
        }
        if self.reference_points < 2 {
            return err("reference_points must be at least 2".into());
        }
        if !self.truth.is_finite() {
            return err("truth parameters must be finite".into());
        }
        self.bounds.validate()?;
        self.svi_config(0).validate()
    }

    /// SVI settings for level `index`, with a seed derived from the study seed.
    pub fn svi_config(&self, index: usize) -> SviConfig {
        SviConfig {
            bounds: self.bounds,
            seed: self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64),
            ..self.svi.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub level: f64,
    pub method: FitMethod,
    pub mean: [f64; N_COEFFS],
    /// Posterior standard deviations (SVI only).
    pub std: Option<[f64; N_COEFFS]>,
    /// MSE of the fitted curve against the noiseless truth on the reference grid.
    pub mse: f64,
    /// Fitter error message, when the fit failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub level: f64,
    pub method: FitMethod,
    pub excitation: f64,
    pub force_fit: f64,
    pub force_true: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub curves: Vec<CurvePoint>,
}

impl StudyOutput {
    pub fn row(&self, level: f64, method: FitMethod) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.method == method && (r.level - level).abs() < 1e-12)
    }
}

/// Noisy samples of `truth` at `n_points` slips evenly spaced over `[-level, level]`.
///
/// The force is evaluated at the true slip; noise is then added to both the
/// recorded slip and the force.
pub fn generate_synthetic<R: Rng + ?Sized>(
    truth: &TireParams,
    level: f64,
    n_points: usize,
    noise_slip: f64,
    noise_force: f64,
    rng: &mut R,
) -> AxleDataset {
    let slip_noise = Normal::new(0.0, noise_slip).expect("noise_slip is a valid std");
    let force_noise = Normal::new(0.0, noise_force).expect("noise_force is a valid std");
    let samples = (0..n_points)
        .map(|i| {
            let x = if n_points == 1 { level } else { -level + 2.0 * level * i as f64 / (n_points - 1) as f64 };
            let y = truth.evaluate(x);
            Sample::new(x + slip_noise.sample(rng), y + force_noise.sample(rng))
        })
        .collect();
    AxleDataset::new(samples)
}

/// MSE between two curves on `n` evenly spaced points of [0, 1].
pub fn reference_mse(truth: &TireParams, fitted: &TireParams, n: usize) -> f64 {
    (0..n)
        .map(|i| i as f64 / (n - 1) as f64)
        .map(|x| (fitted.evaluate(x) - truth.evaluate(x)).powi(2))
        .sum::<f64>()
        / n as f64
}

fn row_from(level: f64, method: FitMethod, fit: Result<FitResult>, truth: &TireParams, n_ref: usize) -> StudyRow {
    match fit {
        Ok(r) => StudyRow {
            level,
            method,
            mean: r.mean,
            std: (method == FitMethod::Svi).then(|| r.std()),
            mse: reference_mse(truth, &TireParams::from_coeffs(r.mean, truth.sh, truth.sv), n_ref),
            error: None,
        },
        Err(e) => StudyRow {
            level,
            method,
            mean: [f64::NAN; N_COEFFS],
            std: None,
            mse: f64::NAN,
            error: Some(e.to_string()),
        },
    }
}

pub fn run_study(config: &StudyConfig) -> Result<StudyOutput> {
    run_study_with(config, Execution::default())
}

/// Fit every level with both methods. Level `k` uses its own RNG streams, so
/// the output does not depend on `exec`.
pub fn run_study_with(config: &StudyConfig, exec: Execution) -> Result<StudyOutput> {
    config.validate()?;
    let truth = config.truth;
    let per_level = exec.map_indexed(config.excitation_levels.len(), |k| {
        let level = config.excitation_levels[k];
        let mut rng = stream_rng(config.seed, k as u64);
        let data = generate_synthetic(&truth, level, config.n_points, config.noise_slip, config.noise_force, &mut rng)
            .with_shifts(crate::dataset::Shifts { sh: truth.sh, sv: truth.sv });
        let nm = fit_nelder_mead(&data, &NelderMeadConfig { bounds: config.bounds, ..Default::default() });
        let svi = fit_svi(&data, &config.svi_config(k));
        if let Err(e) = &svi {
            log::warn!("level {level}: svi failed: {e}");
        }
        [
            row_from(level, FitMethod::NelderMead, nm, &truth, config.reference_points),
            row_from(level, FitMethod::Svi, svi, &truth, config.reference_points),
        ]
    });
    let rows: Vec<StudyRow> = per_level.into_iter().flatten().collect();

    let mut curves = Vec::new();
    let n_curve = 201;
    for row in &rows {
        let highlighted = config.highlight_levels.iter().any(|h| (h - row.level).abs() < 1e-9);
        if !highlighted || row.error.is_some() {
            continue;
        }
        let fitted = TireParams::from_coeffs(row.mean, truth.sh, truth.sv);
        for i in 0..n_curve {
            let x = i as f64 / (n_curve - 1) as f64;
            curves.push(CurvePoint {
                level: row.level,
                method: row.method,
                excitation: x,
                force_fit: fitted.evaluate(x),
                force_true: truth.evaluate(x),
            });
        }
    }
    Ok(StudyOutput { rows, curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_lies_on_curve() {
        let mut rng = stream_rng(1, 0);
        let truth = TireParams::reference();
        let d = generate_synthetic(&truth, 0.3, 101, 0.0, 0.0, &mut rng);
        for s in &d.samples {
            assert_eq!(s.force_coeff, truth.evaluate(s.excitation));
        }
    }

    #[test]
    fn slip_noise_tail_bound() {
        let mut rng = stream_rng(2, 0);
        let d = generate_synthetic(&TireParams::reference(), 0.02, 500, 0.002, 0.02, &mut rng);
        assert!(d.samples.iter().all(|s| s.excitation.abs() <= 0.02 + 4.0 * 0.002));
    }

    #[test]
    fn even_spacing_covers_range() {
        let mut rng = stream_rng(3, 0);
        let d = generate_synthetic(&TireParams::reference(), 0.75, 500, 0.0, 0.02, &mut rng);
        let xs = d.excitations();
        assert_eq!(xs.len(), 500);
        assert!(xs[0] <= -0.74 && xs[499] >= 0.74);
    }

    #[test]
    fn config_validation() {
        let ok = StudyConfig::default();
        ok.validate().unwrap();
        let bad = StudyConfig { excitation_levels: vec![0.5, 0.2], ..StudyConfig::default() };
        assert!(bad.validate().is_err());
        let bad = StudyConfig { excitation_levels: vec![1.5], ..StudyConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_level_yields_one_row_per_method() {
        let cfg = StudyConfig {
            excitation_levels: vec![0.02],
            n_points: 100,
            svi: SviConfig { steps: 200, moment_samples: 500, ..SviConfig::default() },
            ..StudyConfig::default()
        };
        let out = run_study(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.row(0.02, FitMethod::NelderMead).unwrap().std.is_none());
        assert!(out.row(0.02, FitMethod::Svi).unwrap().std.is_some());
        assert_eq!(out.curves.len(), 2 * 201);
    }
}
