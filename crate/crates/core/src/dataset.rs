//! Fitter input: (excitation, normalized force) samples for one axle and direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted excitation magnitude.
pub const MAX_EXCITATION: f64 = 1.5;
/// Largest accepted force coefficient magnitude.
pub const MAX_FORCE_COEFF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axle {
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Excitation is slip ratio.
    Longitudinal,
    /// Excitation is slip angle (rad).
    Lateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub excitation: f64,
    pub force_coeff: f64,
    #[serde(default = "Sample::unit_weight")]
    pub weight: f64,
}

impl Sample {
    pub fn new(excitation: f64, force_coeff: f64) -> Self {
        Self { excitation, force_coeff, weight: 1.0 }
    }

    fn unit_weight() -> f64 {
        1.0
    }

    /// Finite and within the sanity gate.
    pub fn is_plausible(&self) -> bool {
        self.excitation.is_finite()
            && self.force_coeff.is_finite()
            && self.weight.is_finite()
            && self.weight >= 0.0
            && self.excitation.abs() <= MAX_EXCITATION
            && self.force_coeff.abs() <= MAX_FORCE_COEFF
    }
}

/// Horizontal and vertical curve shifts, estimated before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shifts {
    #[serde(rename = "Sh")]
    pub sh: f64,
    #[serde(rename = "Sv")]
    pub sv: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AxleDataset {
    pub samples: Vec<Sample>,
    pub axle: Option<Axle>,
    pub direction: Option<Direction>,
    pub shifts: Shifts,
}

impl AxleDataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples, ..Self::default() }
    }

    pub fn from_pairs(excitation: &[f64], force: &[f64]) -> Self {
        Self::new(excitation.iter().zip(force).map(|(&x, &y)| Sample::new(x, y)).collect())
    }

    pub fn with_shifts(mut self, shifts: Shifts) -> Self {
        self.shifts = shifts;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn excitations(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.excitation).collect()
    }

    pub fn forces(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.force_coeff).collect()
    }

    pub fn max_abs_excitation(&self) -> f64 {
        self.samples.iter().map(|s| s.excitation.abs()).fold(0.0, f64::max)
    }

    /// Reject any sample that fails the sanity gate.
    pub fn validate(&self) -> Result<()> {
        match self.samples.iter().position(|s| !s.is_plausible()) {
            Some(i) => Err(Error::InvalidConfig(format!(
                "dataset sample {i} is non-finite or outside |excitation| <= {MAX_EXCITATION}, |force| <= {MAX_FORCE_COEFF}"
            ))),
            None => Ok(()),
        }
    }

    /// Samples with `|excitation| <= limit`.
    pub fn truncated(&self, limit: f64) -> Self {
        Self {
            samples: self.samples.iter().copied().filter(|s| s.excitation.abs() <= limit).collect(),
            ..self.clone()
        }
    }
}
