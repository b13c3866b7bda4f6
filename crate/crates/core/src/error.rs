use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-positive vertical load (front {front:.3} N, rear {rear:.3} N)")]
    NonPositiveLoad { front: f64, rear: f64 },
    #[error("steering angle {0} rad is outside (-pi/2, pi/2)")]
    SteeringOutOfRange(f64),
    #[error("axle speed {0:.3} m/s is at or below the slip cutoff")]
    LowSpeed(f64),
    #[error("series of length {len} is shorter than filter window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("channel time ranges do not overlap")]
    NoOverlap,
    #[error("insufficient calibration data: {found_s:.2} s of low-dynamics driving, need {required_s:.2} s")]
    InsufficientCalibrationData { found_s: f64, required_s: f64 },
    #[error("insufficient linear-region data: {found} samples, need {required}")]
    InsufficientLinearData { found: usize, required: usize },
    #[error("degenerate slope {0:e} in linear-region fit")]
    DegenerateSlope(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("objective became non-finite at step {step}")]
    NonFiniteObjective { step: usize },
    #[error("result is a point estimate, not a posterior")]
    NotAPosterior,
    #[error("invalid sensor log: {0}")]
    InvalidLog(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
