//! Sensor bias removal from low-dynamics driving.

use serde::{Deserialize, Serialize};

use super::log::{Channel, FrameTable};
use crate::error::{Error, Result};

/// Thresholds selecting straight, steady driving used as the zero reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationCriteria {
    /// Maximum |ay| (m/s^2).
    pub max_ay: f64,
    /// Maximum |yaw rate| (rad/s).
    pub max_yaw_rate: f64,
    /// Minimum vx (m/s).
    pub min_vx: f64,
    /// Minimum total duration of qualifying samples (s).
    pub min_duration: f64,
    /// Largest ay bias searched for (m/s^2).
    pub max_bias_ay: f64,
    /// Largest yaw-rate bias searched for (rad/s).
    pub max_bias_yaw_rate: f64,
}

impl Default for CalibrationCriteria {
    fn default() -> Self {
        Self { max_ay: 0.5, max_yaw_rate: 0.02, min_vx: 5.0, min_duration: 5.0, max_bias_ay: 1.0, max_bias_yaw_rate: 0.2 }
    }
}

/// Biases removed from each channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetReport {
    pub ay: f64,
    pub yaw_rate: f64,
    pub vy: f64,
    pub steer_angle: f64,
    /// Number of frames used as the zero reference.
    pub calibration_frames: usize,
    pub calibration_duration_s: f64,
}

const CORRECTED: [Channel; 4] = [Channel::Ay, Channel::YawRate, Channel::Vy, Channel::SteerAngle];

/// Center of the densest band of half-width `h` among `values`, searched over
/// centers within `[-limit, limit]`. Straight driving is the most common steady
/// state, so with a sensor bias its samples pile up around the bias.
fn densest_center(values: &[f64], h: f64, limit: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.abs() <= limit + h).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let (mut best, mut best_count, mut j) = (0.0, 0, 0);
    for i in 0..v.len() {
        while j < v.len() && v[j] - v[i] <= 2.0 * h {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = (0.5 * (v[i] + v[j - 1])).clamp(-limit, limit);
        }
    }
    best
}

/// Subtract the mean of ay, yaw rate, vy and steering angle over the low-dynamics
/// frames from the whole table. Low-dynamics frames are those moving faster than
/// `min_vx` whose ay and yaw rate lie within the thresholds of their most
/// populated value, which absorbs a constant bias in those two sensors.
pub fn compensate_offsets(frames: &FrameTable, criteria: &CalibrationCriteria) -> Result<(FrameTable, OffsetReport)> {
    let col = |ch: Channel| {
        frames.column(ch).ok_or_else(|| Error::InvalidLog(format!("missing channel {}", ch.column())))
    };
    let (ay, yaw, vx) = (col(Channel::Ay)?, col(Channel::YawRate)?, col(Channel::Vx)?);
    let moving: Vec<usize> = (0..frames.len()).filter(|&i| vx[i] > criteria.min_vx).collect();
    let pick = |c: &[f64]| moving.iter().map(|&i| c[i]).collect::<Vec<f64>>();
    let ay_center = densest_center(&pick(ay), criteria.max_ay, criteria.max_bias_ay);
    let yaw_center = densest_center(&pick(yaw), criteria.max_yaw_rate, criteria.max_bias_yaw_rate);
    let mask: Vec<bool> = (0..frames.len())
        .map(|i| {
            vx[i] > criteria.min_vx
                && (ay[i] - ay_center).abs() < criteria.max_ay
                && (yaw[i] - yaw_center).abs() < criteria.max_yaw_rate
        })
        .collect();
    let count = mask.iter().filter(|&&m| m).count();
    let duration = count as f64 * frames.dt();
    if count == 0 || duration < criteria.min_duration {
        return Err(Error::InsufficientCalibrationData { found_s: duration, required_s: criteria.min_duration });
    }

    let mut out = frames.clone();
    let mut biases = [0.0; 4];
    for (bias, ch) in biases.iter_mut().zip(CORRECTED) {
        let values = col(ch)?;
        *bias = values.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / count as f64;
        let target = out.column_mut(ch).expect("column checked above");
        target.iter_mut().for_each(|v| *v -= *bias);
    }
    let [ay, yaw_rate, vy, steer_angle] = biases;
    Ok((
        out,
        OffsetReport { ay, yaw_rate, vy, steer_angle, calibration_frames: count, calibration_duration_s: duration },
    ))
}
