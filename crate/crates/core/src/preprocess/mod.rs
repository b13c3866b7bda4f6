//! Telemetry to fitter datasets: filtering, resampling, offset compensation,
//! gear-shift masking, axle force reconstruction, shift estimation and thinning.

mod filter;
mod log;
mod offsets;
mod shaping;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use self::filter::{filter_channel, savgol_derivative, FilterKind, FilterSpec};
pub use self::log::{mask_gear_shifts, resample, Channel, FrameTable, SensorGroup, SensorLog, Series};
pub use self::offsets::{compensate_offsets, CalibrationCriteria, OffsetReport};
pub use self::shaping::{estimate_shifts, thin_nearest_neighbor, MIN_LINEAR_SAMPLES};

use crate::dataset::{Axle, AxleDataset, Direction, Sample, Shifts};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::vehicle_dynamics::{FrameInput, VehicleParams};

/// Filter settings per sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterTable {
    pub correvit: FilterSpec,
    pub imu: FilterSpec,
    pub can: FilterSpec,
}

impl Default for FilterTable {
    fn default() -> Self {
        Self {
            correvit: FilterSpec::savitzky_golay(200, 3),
            imu: FilterSpec::savitzky_golay(500, 5),
            can: FilterSpec::savitzky_golay(30, 3),
        }
    }
}

impl FilterTable {
    pub fn for_group(&self, group: SensorGroup) -> &FilterSpec {
        match group {
            SensorGroup::Correvit => &self.correvit,
            SensorGroup::Imu => &self.imu,
            SensorGroup::Can => &self.can,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub filters: FilterTable,
    /// Common frame rate after resampling (Hz).
    pub target_rate: f64,
    /// Half-width of the blanking interval around gear changes (s).
    pub gear_blanking: f64,
    /// Axle speed cutoff for slip computation (m/s).
    pub min_speed: f64,
    pub calibration: CalibrationCriteria,
    /// Linear-region limit for shift estimation on slip-ratio data.
    pub linear_cut_slip_ratio: f64,
    /// Linear-region limit for shift estimation on slip-angle data (rad).
    pub linear_cut_slip_angle: f64,
    /// Thinning radius in unit-scaled (excitation, force) space.
    pub thin_radius: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            filters: FilterTable::default(),
            target_rate: 100.0,
            gear_blanking: 0.2,
            min_speed: crate::vehicle_dynamics::DEFAULT_MIN_SPEED,
            calibration: CalibrationCriteria::default(),
            linear_cut_slip_ratio: 0.02,
            linear_cut_slip_angle: 0.02,
            thin_radius: 0.02,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        for spec in [&self.filters.correvit, &self.filters.imu, &self.filters.can] {
            spec.validate()?;
        }
        let positive = [
            ("target_rate", self.target_rate),
            ("min_speed", self.min_speed),
            ("linear_cut_slip_ratio", self.linear_cut_slip_ratio),
            ("linear_cut_slip_angle", self.linear_cut_slip_angle),
            ("thin_radius", self.thin_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gear_blanking >= 0.0) {
            return Err(Error::InvalidConfig("gear_blanking must be non-negative".into()));
        }
        Ok(())
    }

    fn linear_cut(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Longitudinal => self.linear_cut_slip_ratio,
            Direction::Lateral => self.linear_cut_slip_angle,
        }
    }
}

/// Axle and direction of one output dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DatasetKind {
    pub axle: Axle,
    pub direction: Direction,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind { axle: Axle::Front, direction: Direction::Longitudinal },
        DatasetKind { axle: Axle::Rear, direction: Direction::Longitudinal },
        DatasetKind { axle: Axle::Front, direction: Direction::Lateral },
        DatasetKind { axle: Axle::Rear, direction: Direction::Lateral },
    ];

    /// File-name stem such as `front_lateral`.
    pub fn name(&self) -> String {
        let axle = match self.axle {
            Axle::Front => "front",
            Axle::Rear => "rear",
        };
        let dir = match self.direction {
            Direction::Longitudinal => "longitudinal",
            Direction::Lateral => "lateral",
        };
        format!("{axle}_{dir}")
    }
}

/// Bookkeeping of what the pipeline kept and dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub offsets: OffsetReport,
    pub frames_total: usize,
    pub frames_gear_masked: usize,
    pub frames_low_speed: usize,
    pub frames_nonphysical: usize,
    pub frames_used: usize,
    pub datasets: BTreeMap<String, DatasetReport>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetReport {
    pub samples_raw: usize,
    pub samples_rejected: usize,
    pub samples_thinned: usize,
    pub shifts: Shifts,
    /// Set when shift estimation failed and zero shifts were used.
    pub shift_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOutput {
    pub datasets: Vec<(DatasetKind, AxleDataset)>,
    pub frames: FrameTable,
    pub report: PipelineReport,
}

/// Filter every channel at its native rate and append the yaw acceleration.
pub fn filter_log(log: &SensorLog, filters: &FilterTable, exec: Execution) -> Result<BTreeMap<Channel, Series>> {
    let channels: Vec<Channel> = log.series.keys().copied().collect();
    let filtered = exec.map_slice(&channels, |&ch| -> Result<(Channel, Series)> {
        let raw = log.require(ch)?;
        if ch.is_discrete() {
            return Ok((ch, raw.clone()));
        }
        let v = filters.for_group(ch.group()).apply(&raw.v)?;
        Ok((ch, Series { t: raw.t.clone(), v }))
    });
    let mut out: BTreeMap<Channel, Series> = filtered.into_iter().collect::<Result<_>>()?;

    let yaw = out.get(&Channel::YawRate).ok_or_else(|| Error::InvalidLog("missing channel yaw_rate_radps".into()))?;
    let rate = log
        .rate(Channel::YawRate)
        .ok_or_else(|| Error::InvalidLog("cannot determine IMU sample rate".into()))?;
    let spec = filters.imu;
    let accel = savgol_derivative(&yaw.v, spec.window, spec.order, 1.0 / rate)?;
    let t = yaw.t.clone();
    out.insert(Channel::YawAccel, Series { t, v: accel });
    Ok(out)
}

fn frame_input(frames: &FrameTable, i: usize) -> FrameInput {
    let c = |ch: Channel| frames.columns[&ch][i];
    FrameInput {
        vx: c(Channel::Vx),
        vy: c(Channel::Vy),
        ax: c(Channel::Ax),
        ay: c(Channel::Ay),
        yaw_rate: c(Channel::YawRate),
        yaw_accel: c(Channel::YawAccel),
        steer: c(Channel::SteerAngle),
        omega_fl: c(Channel::OmegaFl),
        omega_fr: c(Channel::OmegaFr),
        omega_rl: c(Channel::OmegaRl),
        omega_rr: c(Channel::OmegaRr),
    }
}

/// Run the full chain from raw telemetry to thinned, shift-annotated datasets.
pub fn run_pipeline(
    log: &SensorLog,
    vehicle: &VehicleParams,
    config: &PreprocessConfig,
    exec: Execution,
) -> Result<PreprocessOutput> {
    config.validate()?;
    vehicle.validate()?;
    for ch in Channel::REQUIRED.iter().filter(|c| !c.is_discrete()) {
        log.require(*ch)?;
    }

    let filtered = filter_log(log, &config.filters, exec)?;
    let frames = resample(&filtered, config.target_rate)?;
    let (frames, offsets) = compensate_offsets(&frames, &config.calibration)?;
    let gear_ok = mask_gear_shifts(&frames, config.gear_blanking);

    let states = exec.map_indexed(frames.len(), |i| {
        gear_ok[i].then(|| vehicle.process_frame(&frame_input(&frames, i), config.min_speed))
    });

    let mut report = PipelineReport { offsets, frames_total: frames.len(), ..Default::default() };
    let mut raw: BTreeMap<DatasetKind, Vec<Sample>> = BTreeMap::new();
    let mut rejected: BTreeMap<DatasetKind, usize> = BTreeMap::new();
    for state in states {
        let s = match state {
            None => {
                report.frames_gear_masked += 1;
                continue;
            }
            Some(Err(Error::LowSpeed(_))) => {
                report.frames_low_speed += 1;
                continue;
            }
            Some(Err(_)) => {
                report.frames_nonphysical += 1;
                continue;
            }
            Some(Ok(s)) => s,
        };
        report.frames_used += 1;
        let f = s.forces;
        let pairs = [
            (s.slip.lambda_f, f.fx_f / f.fz_f),
            (s.slip.lambda_r, f.fx_r / f.fz_r),
            (s.slip.alpha_f, f.fy_f_tf / f.fz_f),
            (s.slip.alpha_r, f.fy_r / f.fz_r),
        ];
        for (kind, (x, y)) in DatasetKind::ALL.into_iter().zip(pairs) {
            let sample = Sample::new(x, y);
            if sample.is_plausible() {
                raw.entry(kind).or_default().push(sample);
            } else {
                *rejected.entry(kind).or_default() += 1;
            }
        }
    }

    let mut datasets = Vec::new();
    for kind in DatasetKind::ALL {
        let samples = raw.remove(&kind).unwrap_or_default();
        let mut dataset = AxleDataset {
            samples,
            axle: Some(kind.axle),
            direction: Some(kind.direction),
            shifts: Shifts::default(),
        };
        let mut entry = DatasetReport {
            samples_raw: dataset.len(),
            samples_rejected: rejected.get(&kind).copied().unwrap_or(0),
            ..Default::default()
        };
        match estimate_shifts(&dataset, config.linear_cut(kind.direction)) {
            Ok(shifts) => dataset.shifts = shifts,
            Err(e) => {
                ::log::warn!("{}: {e}; using zero shifts", kind.name());
                entry.shift_warning = Some(e.to_string());
            }
        }
        let dataset = thin_nearest_neighbor(&dataset, config.thin_radius);
        entry.samples_thinned = dataset.len();
        entry.shifts = dataset.shifts;
        report.datasets.insert(kind.name(), entry);
        datasets.push((kind, dataset));
    }
    Ok(PreprocessOutput { datasets, frames, report })
}
