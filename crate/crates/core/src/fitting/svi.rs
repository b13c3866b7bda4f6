//! Stochastic variational inference over (B, C, D, E).
//!
//! The guide is a full-covariance Gaussian over unconstrained coordinates `u`,
//! mapped onto the bounds box by `z = lo + (hi - lo) * sigmoid(u)`. The prior is
//! uniform on the box and the likelihood is Gaussian with a point-estimated
//! noise scale `sigma = exp(log_sigma)`. The ELBO
//!
//! ```text
//! E_q[ log p(x | z(u)) + log p(z(u)) + log |dz/du| ] + H[q]
//! ```
//!
//! is maximized by Adam on reparameterized single-sample gradients. Gradients
//! are analytic, chained through the tire model partials.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{fit_nelder_mead, mean_squared_error, NelderMeadConfig};
use super::{FitMethod, FitResult, FreeCoeffs, GuideSnapshot};
use crate::dataset::AxleDataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tire_model::{value_and_gradients, ParamBounds, N_COEFFS};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SviConfig {
    pub steps: usize,
    /// Monte-Carlo draws per ELBO gradient estimate.
    pub mc_samples: usize,
    /// Initial Adam step size, decayed to zero on a cosine schedule.
    pub learning_rate: f64,
    pub seed: u64,
    pub bounds: ParamBounds,
    /// Pin the shape factor C to this value.
    pub fixed_c: Option<f64>,
    /// Guide draws used to estimate the reported constrained-space moments.
    pub moment_samples: usize,
    /// Initial guide standard deviation as a fraction of each box width.
    pub init_scale: f64,
    pub init_loc: InitLoc,
}

/// Where the guide mean starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitLoc {
    /// Bounds-box midpoint.
    Midpoint,
    /// The preliminary Nelder-Mead estimate, pulled slightly inside the box.
    #[default]
    PointEstimate,
}

/// Box fraction kept between a warm start and the bounds.
const INIT_MARGIN: f64 = 0.05;

impl Default for SviConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            mc_samples: 8,
            learning_rate: 0.01,
            seed: 0,
            bounds: ParamBounds::default(),
            fixed_c: None,
            moment_samples: 10_000,
            init_scale: 0.01,
            init_loc: InitLoc::default(),
        }
    }
}

impl SviConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.steps == 0 || self.mc_samples == 0 || self.moment_samples < 2 {
            return Err(Error::InvalidConfig(
                "svi: steps and mc_samples must be >= 1, moment_samples >= 2".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("svi: learning_rate {} must be positive", self.learning_rate)));
        }
        if !(self.init_scale > 0.0 && self.init_scale < 1.0) {
            return Err(Error::InvalidConfig(format!("svi: init_scale {} must lie in (0, 1)", self.init_scale)));
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` without overflow.
#[inline]
fn softplus(u: f64) -> f64 {
    if u > 30.0 { u } else { u.exp().ln_1p() }
}

/// Gaussian guide over the free coefficients, plus the noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Guide {
    free: Vec<usize>,
    pub loc: Vec<f64>,
    /// Log of the Cholesky diagonal.
    pub log_diag: Vec<f64>,
    /// Strictly lower Cholesky entries, row by row.
    pub off_diag: Vec<f64>,
    pub log_sigma: f64,
}

impl Guide {
    pub fn new(free: Vec<usize>, loc: Vec<f64>, scale: Vec<f64>, sigma: f64) -> Self {
        let d = free.len();
        assert_eq!(loc.len(), d);
        assert_eq!(scale.len(), d);
        Self {
            free,
            loc,
            log_diag: scale.iter().map(|s| s.ln()).collect(),
            off_diag: vec![0.0; d * (d - 1) / 2],
            log_sigma: sigma.ln(),
        }
    }

    pub(crate) fn from_snapshot(s: &GuideSnapshot, log_sigma: f64) -> Self {
        let d = s.free.len();
        let mut off_diag = Vec::with_capacity(d * (d - 1) / 2);
        for i in 1..d {
            for j in 0..i {
                off_diag.push(s.scale_tril[i * d + j]);
            }
        }
        Self {
            free: s.free.clone(),
            loc: s.loc.clone(),
            log_diag: (0..d).map(|i| s.scale_tril[i * d + i].ln()).collect(),
            off_diag,
            log_sigma,
        }
    }

    pub fn snapshot(&self) -> GuideSnapshot {
        GuideSnapshot { free: self.free.clone(), loc: self.loc.clone(), scale_tril: self.scale_tril() }
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Length of the flat parameter vector used by [`Guide::to_vec`].
    pub fn n_params(&self) -> usize {
        let d = self.dim();
        2 * d + d * (d - 1) / 2 + 1
    }

    /// Flat parameters: loc, log-diagonal, off-diagonal, log sigma.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend(&self.loc);
        v.extend(&self.log_diag);
        v.extend(&self.off_diag);
        v.push(self.log_sigma);
        v
    }

    pub fn set_from_slice(&mut self, v: &[f64]) {
        let d = self.dim();
        let m = d * (d - 1) / 2;
        self.loc.copy_from_slice(&v[..d]);
        self.log_diag.copy_from_slice(&v[d..2 * d]);
        self.off_diag.copy_from_slice(&v[2 * d..2 * d + m]);
        self.log_sigma = v[2 * d + m];
    }

    /// Row-major lower-triangular scale matrix.
    pub fn scale_tril(&self) -> Vec<f64> {
        let d = self.dim();
        let mut l = vec![0.0; d * d];
        let mut k = 0;
        for i in 0..d {
            l[i * d + i] = self.log_diag[i].exp();
            for j in 0..i {
                l[i * d + j] = self.off_diag[k];
                k += 1;
            }
        }
        l
    }

    /// `loc + L eps`.
    pub fn transform(&self, eps: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let l = self.scale_tril();
        (0..d).map(|i| self.loc[i] + (0..=i).map(|j| l[i * d + j] * eps[j]).sum::<f64>()).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.transform(&eps)
    }

    /// Map unconstrained free coordinates into the box, filling pinned entries from `base`.
    pub fn constrain(&self, u: &[f64], lower: &[f64; N_COEFFS], width: &[f64; N_COEFFS], base: &[f64; N_COEFFS]) -> [f64; N_COEFFS] {
        let mut z = *base;
        for (&k, &ui) in self.free.iter().zip(u) {
            z[k] = (lower[k] + width[k] * sigmoid(ui)).clamp(lower[k], lower[k] + width[k]);
        }
        z
    }

    /// Differential entropy of the Gaussian guide.
    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (1.0 + LN_2PI) + self.log_diag.iter().sum::<f64>()
    }
}

/// Data and constraint geometry for ELBO evaluation.
#[derive(Debug, Clone)]
pub struct SviModel<'a> {
    pub dataset: &'a AxleDataset,
    lower: [f64; N_COEFFS],
    width: [f64; N_COEFFS],
    /// Values used for pinned coefficients.
    base: [f64; N_COEFFS],
}

impl<'a> SviModel<'a> {
    pub fn new(dataset: &'a AxleDataset, bounds: &ParamBounds, fixed_c: Option<f64>) -> Self {
        let mut base = bounds.midpoint();
        if let Some(c) = fixed_c {
            base[1] = c;
        }
        Self { dataset, lower: bounds.lower(), width: bounds.width(), base }
    }
}

/// Single-draw reparameterized ELBO and its gradient with respect to
/// [`Guide::to_vec`], for standard-normal noise `eps`.
pub fn elbo_single(model: &SviModel<'_>, guide: &Guide, eps: &[f64]) -> (f64, Vec<f64>) {
    let d = guide.dim();
    let u = guide.transform(eps);
    let mut coeffs = model.base;
    let mut s = [0.0; N_COEFFS];
    let mut log_prior = 0.0;
    for (i, &k) in guide.free.iter().enumerate() {
        s[i] = sigmoid(u[i]);
        coeffs[k] = model.lower[k] + model.width[k] * s[i];
        // uniform prior density times the Jacobian of the box map
        log_prior += -softplus(-u[i]) - softplus(u[i]);
    }

    let sigma2 = (2.0 * guide.log_sigma).exp();
    let (sh, sv) = (model.dataset.shifts.sh, model.dataset.shifts.sv);
    let mut sum_w = 0.0;
    let mut sum_wr2 = 0.0;
    let mut dz = [0.0; N_COEFFS];
    for sample in &model.dataset.samples {
        let (y, g) = value_and_gradients(&coeffs, sample.excitation + sh);
        let r = sample.force_coeff - y - sv;
        let w = sample.weight;
        sum_w += w;
        sum_wr2 += w * r * r;
        for (i, &k) in guide.free.iter().enumerate() {
            dz[i] += w * r * g[k];
        }
    }
    let log_lik = -0.5 * sum_w * LN_2PI - sum_w * guide.log_sigma - 0.5 * sum_wr2 / sigma2;
    let value = log_lik + log_prior + guide.entropy();

    let mut grad = vec![0.0; guide.n_params()];
    let mut g_u = [0.0; N_COEFFS];
    for (i, &k) in guide.free.iter().enumerate() {
        let dz_du = model.width[k] * s[i] * (1.0 - s[i]);
        g_u[i] = dz[i] / sigma2 * dz_du + (1.0 - 2.0 * s[i]);
    }
    let (loc_g, rest) = grad.split_at_mut(d);
    let (diag_g, rest) = rest.split_at_mut(d);
    let (off_g, sigma_g) = rest.split_at_mut(d * (d - 1) / 2);
    let mut k = 0;
    for i in 0..d {
        loc_g[i] = g_u[i];
        diag_g[i] = g_u[i] * eps[i] * guide.log_diag[i].exp() + 1.0;
        for j in 0..i {
            off_g[k] = g_u[i] * eps[j];
            k += 1;
        }
    }
    sigma_g[0] = -sum_w + sum_wr2 / sigma2;
    (value, grad)
}

/// Monte-Carlo ELBO estimate from `mc_samples` guide draws.
pub fn elbo<R: Rng + ?Sized>(model: &SviModel<'_>, guide: &Guide, mc_samples: usize, rng: &mut R) -> f64 {
    let d = guide.dim();
    let mut eps = vec![0.0; d];
    let total: f64 = (0..mc_samples)
        .map(|_| {
            eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
            elbo_single(model, guide, &eps).0
        })
        .sum();
    total / mc_samples as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Ascent step on `params` along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Posterior mean and covariance over (B, C, D, E) from guide draws.
fn constrained_moments<R: Rng + ?Sized>(
    guide: &Guide,
    model: &SviModel<'_>,
    n: usize,
    rng: &mut R,
) -> ([f64; N_COEFFS], Vec<f64>) {
    let draws: Vec<[f64; N_COEFFS]> = (0..n)
        .map(|_| guide.constrain(&guide.draw(rng), &model.lower, &model.width, &model.base))
        .collect();
    let free = &guide.free;
    let mut mean = model.base;
    for &k in free {
        mean[k] = draws.iter().map(|z| z[k]).sum::<f64>() / n as f64;
    }
    let mut cov = vec![0.0; N_COEFFS * N_COEFFS];
    for z in &draws {
        for &a in free {
            for &b in free.iter().filter(|&&b| b <= a) {
                cov[a * N_COEFFS + b] += (z[a] - mean[a]) * (z[b] - mean[b]);
            }
        }
    }
    for &a in free {
        for &b in free.iter().filter(|&&b| b <= a) {
            let v = cov[a * N_COEFFS + b] / (n - 1) as f64;
            cov[a * N_COEFFS + b] = v;
            cov[b * N_COEFFS + a] = v;
        }
    }
    (mean, cov)
}

/// Fit the variational posterior. Deterministic for a given seed.
pub fn fit_svi(dataset: &AxleDataset, config: &SviConfig) -> Result<FitResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let free = FreeCoeffs::new(&config.bounds, config.fixed_c)?;

    let point = fit_nelder_mead(
        dataset,
        &NelderMeadConfig { bounds: config.bounds, fixed_c: config.fixed_c, ..Default::default() },
    )?;
    let sigma0 = point.mse.sqrt().max(1e-4);

    let model = SviModel::new(dataset, &config.bounds, config.fixed_c);
    // std in u-space at the box midpoint: dz/du = width / 4
    let scale0: Vec<f64> = free.indices().iter().map(|_| 4.0 * config.init_scale).collect();
    let d = free.indices().len();
    let loc0: Vec<f64> = match config.init_loc {
        InitLoc::Midpoint => vec![0.0; d],
        InitLoc::PointEstimate => free
            .indices()
            .iter()
            .map(|&k| {
                let s = ((point.mean[k] - model.lower[k]) / model.width[k]).clamp(INIT_MARGIN, 1.0 - INIT_MARGIN);
                (s / (1.0 - s)).ln()
            })
            .collect(),
    };
    let mut guide = Guide::new(free.indices().to_vec(), loc0, scale0, sigma0);

    let mut rng = stream_rng(config.seed, 0);
    let mut params = guide.to_vec();
    let mut adam = Adam::new(params.len());
    let mut grad_sum = vec![0.0; params.len()];
    let mut eps = vec![0.0; d];
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        guide.set_from_slice(&params);
        grad_sum.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for _ in 0..config.mc_samples {
            eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
            let (v, g) = elbo_single(&model, &guide, &eps);
            value += v;
            grad_sum.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / config.mc_samples as f64;
        value *= scale;
        grad_sum.iter_mut().for_each(|g| *g *= scale);
        if !value.is_finite() || grad_sum.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective { step });
        }
        trace.push(value);
        let progress = step as f64 / config.steps as f64;
        let lr = config.learning_rate * 0.5 * (1.0 + (PI * progress).cos());
        adam.step(&mut params, &grad_sum, lr);
    }
    guide.set_from_slice(&params);

    let mut moment_rng = stream_rng(config.seed, 1);
    let (mean, covariance) = constrained_moments(&guide, &model, config.moment_samples, &mut moment_rng);
    let mse = mean_squared_error(dataset, &mean);

    Ok(FitResult {
        method: FitMethod::Svi,
        mean,
        covariance,
        sigma_noise: guide.log_sigma.exp(),
        mse,
        bounds: config.bounds,
        shifts: dataset.shifts,
        fixed_c: config.fixed_c,
        iterations: config.steps,
        converged: true,
        trace,
        guide: Some(guide.snapshot()),
        config: serde_json::to_value(config).expect("config serializes"),
    })
}
