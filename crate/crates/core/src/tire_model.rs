//! Magic Formula Simple tire model.
//!
//! The model maps an excitation `X` (slip ratio or slip angle) to a normalized
//! force `Y = F / Fz`:
//!
//! ```text
//! x    = X + Sh
//! y(x) = D sin(C atan(B x - E (B x - atan(B x))))
//! Y    = y(x) + Sv
//! ```

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of free shape coefficients (B, C, D, E).
pub const N_COEFFS: usize = 4;

/// Coefficient names in the order used by every 4-vector in this crate.
pub const COEFF_NAMES: [&str; N_COEFFS] = ["B", "C", "D", "E"];

/// Magic Formula coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireParams {
    /// Stiffness factor.
    #[serde(rename = "B")]
    pub b: f64,
    /// Shape factor.
    #[serde(rename = "C")]
    pub c: f64,
    /// Peak factor, in force-coefficient units.
    #[serde(rename = "D")]
    pub d: f64,
    /// Curvature factor.
    #[serde(rename = "E")]
    pub e: f64,
    /// Horizontal shift, in excitation units.
    #[serde(rename = "Sh", default)]
    pub sh: f64,
    /// Vertical shift, in force-coefficient units.
    #[serde(rename = "Sv", default)]
    pub sv: f64,
}

impl TireParams {
    pub const fn new(b: f64, c: f64, d: f64, e: f64) -> Self {
        Self { b, c, d, e, sh: 0.0, sv: 0.0 }
    }

    /// Reference curve used by the simulative excitation study.
    pub const fn reference() -> Self {
        Self::new(15.0, 2.0, 1.5, 0.8)
    }

    pub fn from_coeffs(coeffs: [f64; N_COEFFS], sh: f64, sv: f64) -> Self {
        let [b, c, d, e] = coeffs;
        Self { b, c, d, e, sh, sv }
    }

    pub fn coeffs(&self) -> [f64; N_COEFFS] {
        [self.b, self.c, self.d, self.e]
    }

    pub fn with_shifts(mut self, sh: f64, sv: f64) -> Self {
        self.sh = sh;
        self.sv = sv;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs().iter().all(|v| v.is_finite()) && self.sh.is_finite() && self.sv.is_finite()
    }

    /// Normalized force at excitation `x`.
    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        evaluate_coeffs(&self.coeffs(), x + self.sh) + self.sv
    }

    pub fn evaluate_batch(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.evaluate(x)).collect()
    }

    /// Slope of the curve at the shifted origin, `B * C * D`.
    pub fn stiffness_at_origin(&self) -> f64 {
        self.b * self.c * self.d
    }

    /// Analytic partial derivatives of `Y` with respect to (B, C, D, E) at excitation `x`.
    #[inline]
    pub fn gradients(&self, x: f64) -> [f64; N_COEFFS] {
        value_and_gradients(&self.coeffs(), x + self.sh).1
    }

    /// Analytic derivative `dY/dX`.
    pub fn slope(&self, x: f64) -> f64 {
        let [b, c, d, e] = self.coeffs();
        let bx = b * (x + self.sh);
        let phi = bx - e * (bx - bx.atan());
        let dphi_dx = b * (1.0 - e) + e * b / (1.0 + bx * bx);
        d * (c * phi.atan()).cos() * c / (1.0 + phi * phi) * dphi_dx
    }
}

impl Default for TireParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Unshifted curve `y(x)` for coefficients `[B, C, D, E]`.
#[inline]
pub fn evaluate_coeffs(coeffs: &[f64; N_COEFFS], x: f64) -> f64 {
    let [b, c, d, e] = *coeffs;
    let bx = b * x;
    let phi = bx - e * (bx - bx.atan());
    d * (c * phi.atan()).sin()
}

/// Unshifted curve value together with its gradient with respect to `[B, C, D, E]`.
#[inline]
pub fn value_and_gradients(coeffs: &[f64; N_COEFFS], x: f64) -> (f64, [f64; N_COEFFS]) {
    let [b, c, d, e] = *coeffs;
    let bx = b * x;
    let atan_bx = bx.atan();
    let phi = bx - e * (bx - atan_bx);
    let atan_phi = phi.atan();
    let (sin_t, cos_t) = (c * atan_phi).sin_cos();

    let y = d * sin_t;
    // dy/dphi
    let dy_dphi = d * cos_t * c / (1.0 + phi * phi);
    // dphi/dB = x (1 - E) + E x / (1 + (Bx)^2)
    let dphi_db = x * (1.0 - e) + e * x / (1.0 + bx * bx);
    let dphi_de = -(bx - atan_bx);

    (
        y,
        [dy_dphi * dphi_db, d * cos_t * atan_phi, sin_t, dy_dphi * dphi_de],
    )
}

/// Box constraints on (B, C, D, E).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    #[serde(rename = "B")]
    pub b: (f64, f64),
    #[serde(rename = "C")]
    pub c: (f64, f64),
    #[serde(rename = "D")]
    pub d: (f64, f64),
    #[serde(rename = "E")]
    pub e: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            b: (5.0, 40.0),
            c: (1.0, 3.0),
            d: (0.1, 2.0),
            e: (-1.0, 1.0),
        }
    }
}

impl ParamBounds {
    pub fn new(pairs: [(f64, f64); N_COEFFS]) -> Result<Self, Error> {
        let bounds = Self { b: pairs[0], c: pairs[1], d: pairs[2], e: pairs[3] };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn pairs(&self) -> [(f64, f64); N_COEFFS] {
        [self.b, self.c, self.d, self.e]
    }

    pub fn lower(&self) -> [f64; N_COEFFS] {
        self.pairs().map(|p| p.0)
    }

    pub fn upper(&self) -> [f64; N_COEFFS] {
        self.pairs().map(|p| p.1)
    }

    pub fn width(&self) -> [f64; N_COEFFS] {
        self.pairs().map(|(lo, hi)| hi - lo)
    }

    pub fn midpoint(&self) -> [f64; N_COEFFS] {
        self.pairs().map(|(lo, hi)| 0.5 * (lo + hi))
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, (lo, hi)) in COEFF_NAMES.iter().zip(self.pairs()) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBounds(format!("{name}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, coeffs: &[f64; N_COEFFS]) -> bool {
        coeffs.iter().zip(self.pairs()).all(|(&v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, coeffs: &[f64; N_COEFFS]) -> [f64; N_COEFFS] {
        let pairs = self.pairs();
        std::array::from_fn(|i| coeffs[i].clamp(pairs[i].0, pairs[i].1))
    }
}
