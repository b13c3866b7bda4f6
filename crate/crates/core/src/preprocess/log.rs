//! Multi-rate sensor logs and resampling onto a common grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor that produced a channel. Filter settings are chosen per sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorGroup {
    Correvit,
    Imu,
    Can,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Vx,
    Vy,
    Ax,
    Ay,
    YawRate,
    SteerAngle,
    OmegaFl,
    OmegaFr,
    OmegaRl,
    OmegaRr,
    Gear,
    /// Derived from the filtered yaw rate; not a CSV column.
    YawAccel,
}

impl Channel {
    /// Columns required in the telemetry CSV.
    pub const REQUIRED: [Channel; 11] = [
        Channel::Vx,
        Channel::Vy,
        Channel::Ax,
        Channel::Ay,
        Channel::YawRate,
        Channel::SteerAngle,
        Channel::OmegaFl,
        Channel::OmegaFr,
        Channel::OmegaRl,
        Channel::OmegaRr,
        Channel::Gear,
    ];

    /// Column name in the telemetry CSV.
    pub fn column(self) -> &'static str {
        match self {
            Channel::Vx => "vx_mps",
            Channel::Vy => "vy_mps",
            Channel::Ax => "ax_mps2",
            Channel::Ay => "ay_mps2",
            Channel::YawRate => "yaw_rate_radps",
            Channel::SteerAngle => "steer_angle_rad",
            Channel::OmegaFl => "omega_fl_radps",
            Channel::OmegaFr => "omega_fr_radps",
            Channel::OmegaRl => "omega_rl_radps",
            Channel::OmegaRr => "omega_rr_radps",
            Channel::Gear => "gear",
            Channel::YawAccel => "yaw_accel_radps2",
        }
    }

    pub fn group(self) -> SensorGroup {
        match self {
            Channel::Vx | Channel::Vy => SensorGroup::Correvit,
            Channel::Ax | Channel::Ay | Channel::YawRate | Channel::YawAccel => SensorGroup::Imu,
            _ => SensorGroup::Can,
        }
    }

    /// Discrete channels are held, not filtered or interpolated.
    pub fn is_discrete(self) -> bool {
        self == Channel::Gear
    }
}

/// Timestamped samples of one channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl Series {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() {
            return Err(Error::InvalidLog(format!("{} timestamps for {} values", t.len(), v.len())));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidLog("timestamps must be strictly increasing".into()));
        }
        Ok(Self { t, v })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Median sample spacing (s).
    pub fn median_dt(&self) -> Option<f64> {
        if self.t.len() < 2 {
            return None;
        }
        let mut dts: Vec<f64> = self.t.windows(2).map(|w| w[1] - w[0]).collect();
        dts.sort_by(f64::total_cmp);
        Some(dts[dts.len() / 2])
    }

    fn span(&self) -> Option<(f64, f64)> {
        Some((*self.t.first()?, *self.t.last()?))
    }

    fn interp_linear(&self, t: f64, cursor: &mut usize) -> f64 {
        while *cursor + 2 < self.t.len() && self.t[*cursor + 1] < t {
            *cursor += 1;
        }
        let i = *cursor;
        if self.t.len() == 1 {
            return self.v[0];
        }
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        self.v[i] + a * (self.v[i + 1] - self.v[i])
    }

    fn sample_hold(&self, t: f64, cursor: &mut usize) -> f64 {
        while *cursor + 1 < self.t.len() && self.t[*cursor + 1] <= t {
            *cursor += 1;
        }
        self.v[*cursor]
    }
}

/// Raw telemetry with one independently sampled series per channel.
#[derive(Debug, Clone, Default)]
pub struct SensorLog {
    pub series: BTreeMap<Channel, Series>,
    /// Declared sample rates per sensor (Hz); inferred from timestamps when absent.
    pub rates: BTreeMap<SensorGroup, f64>,
}

impl SensorLog {
    pub fn get(&self, ch: Channel) -> Option<&Series> {
        self.series.get(&ch)
    }

    pub fn insert(&mut self, ch: Channel, series: Series) {
        self.series.insert(ch, series);
    }

    /// Sample rate of a channel (Hz), declared or inferred.
    pub fn rate(&self, ch: Channel) -> Option<f64> {
        self.rates
            .get(&ch.group())
            .copied()
            .or_else(|| self.get(ch)?.median_dt().map(|dt| 1.0 / dt))
    }

    pub fn require(&self, ch: Channel) -> Result<&Series> {
        self.get(ch)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::InvalidLog(format!("missing channel {}", ch.column())))
    }
}

/// Channels on a common, evenly spaced time grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameTable {
    pub t: Vec<f64>,
    pub columns: BTreeMap<Channel, Vec<f64>>,
}

impl FrameTable {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn column(&self, ch: Channel) -> Option<&[f64]> {
        self.columns.get(&ch).map(Vec::as_slice)
    }

    pub fn column_mut(&mut self, ch: Channel) -> Option<&mut Vec<f64>> {
        self.columns.get_mut(&ch)
    }

    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 { 0.0 } else { self.t[1] - self.t[0] }
    }
}

/// Resample every series onto `start + k / rate` over the intersection of the
/// channel time ranges. Continuous channels are linearly interpolated, discrete
/// ones use the most recent sample.
pub fn resample(series: &BTreeMap<Channel, Series>, rate: f64) -> Result<FrameTable> {
    if !(rate > 0.0) {
        return Err(Error::InvalidConfig(format!("resample rate {rate} must be positive")));
    }
    let mut start = f64::NEG_INFINITY;
    let mut end = f64::INFINITY;
    for s in series.values() {
        let (a, b) = s.span().ok_or(Error::NoOverlap)?;
        start = start.max(a);
        end = end.min(b);
    }
    if series.is_empty() || end < start {
        return Err(Error::NoOverlap);
    }
    let n = ((end - start) * rate + 1e-9).floor() as usize + 1;
    let t: Vec<f64> = (0..n).map(|k| start + k as f64 / rate).collect();
    let columns = series
        .iter()
        .map(|(&ch, s)| {
            let mut cursor = 0;
            let values = t
                .iter()
                .map(|&tk| {
                    if ch.is_discrete() {
                        s.sample_hold(tk, &mut cursor)
                    } else {
                        s.interp_linear(tk, &mut cursor)
                    }
                })
                .collect();
            (ch, values)
        })
        .collect();
    Ok(FrameTable { t, columns })
}

/// False within `blanking` seconds of any gear change, true elsewhere.
///
/// A change is timestamped at the first frame showing the new gear.
pub fn mask_gear_shifts(frames: &FrameTable, blanking: f64) -> Vec<bool> {
    let Some(gear) = frames.column(Channel::Gear) else {
        ::log::warn!("no gear channel; gear-shift masking skipped");
        return vec![true; frames.len()];
    };
    let shifts: Vec<f64> = gear
        .windows(2)
        .zip(&frames.t[1..])
        .filter(|(g, _)| g[0] != g[1])
        .map(|(_, &t)| t)
        .collect();
    let tol = 1e-9;
    frames
        .t
        .iter()
        .map(|&t| !shifts.iter().any(|&ts| (t - ts).abs() <= blanking + tol))
        .collect()
}
