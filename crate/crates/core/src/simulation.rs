//! Closed-loop single-track simulation producing multi-rate telemetry, used to
//! exercise the preprocessing chain against known tire curves.
//!
//! The car is rear-wheel driven with free-rolling front wheels and an open
//! differential. A speed controller sets the rear drive force; the rear wheel
//! speed is chosen so the longitudinal tire curve delivers exactly that force.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{Channel, SensorGroup, SensorLog, Series};
use crate::tire_model::TireParams;
use crate::vehicle_dynamics::VehicleParams;

/// Tire curves driving the simulation (force coefficient versus slip).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTires {
    pub front_lateral: TireParams,
    pub rear_lateral: TireParams,
    pub rear_longitudinal: TireParams,
}

impl Default for SimTires {
    fn default() -> Self {
        Self {
            front_lateral: TireParams::reference(),
            rear_lateral: TireParams::new(24.0, 1.9, 1.9, 0.5),
            rear_longitudinal: TireParams::new(12.0, 1.65, 1.6, 0.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Maneuver {
    pub duration: f64,
    /// Straight driving before the steering sweep starts (s).
    pub straight: f64,
    pub speed: f64,
    /// Peak road-wheel steering angle of the sweep (rad).
    pub steer_amplitude: f64,
    /// Sweep frequency (Hz).
    pub steer_frequency: f64,
    /// Times of single upshifts.
    pub gear_shifts: Vec<f64>,
    pub rates: SensorRates,
    pub noise: SensorNoise,
    /// Constant biases added to ay, yaw rate, vy and steering angle.
    pub bias: [f64; 4],
}

impl Default for Maneuver {
    fn default() -> Self {
        Self {
            duration: 70.0,
            straight: 10.0,
            speed: 25.0,
            steer_amplitude: 0.16,
            steer_frequency: 0.025,
            gear_shifts: vec![5.0],
            rates: SensorRates::default(),
            noise: SensorNoise::default(),
            bias: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRates {
    pub correvit: f64,
    pub imu: f64,
    pub can: f64,
}

impl Default for SensorRates {
    fn default() -> Self {
        Self { correvit: 500.0, imu: 800.0, can: 100.0 }
    }
}

/// Gaussian noise standard deviations per channel family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub velocity: f64,
    pub acceleration: f64,
    pub yaw_rate: f64,
    pub steer: f64,
    pub wheel_speed: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self { velocity: 0.02, acceleration: 0.1, yaw_rate: 0.002, steer: 0.0005, wheel_speed: 0.05 }
    }
}

/// Simulation step (s); every sensor rate must divide its inverse.
const STEP_RATE: f64 = 4000.0;
const SPEED_GAIN: f64 = 1.0;

fn decimation(rate: f64) -> Result<usize> {
    let k = STEP_RATE / rate;
    if !(rate > 0.0) || (k - k.round()).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("sensor rate {rate} Hz must divide {STEP_RATE} Hz")));
    }
    Ok(k.round() as usize)
}

/// Slip at which `tire` delivers force coefficient `mu`, searched below its peak.
fn invert_curve(tire: &TireParams, mu: f64) -> f64 {
    let (mut lo, mut hi) = (-0.2, 0.2);
    // peak lies beyond the linear region; shrink the bracket to the monotone part
    while tire.slope(hi) <= 0.0 && hi > 1e-4 {
        hi *= 0.5;
    }
    while tire.slope(lo) <= 0.0 && lo < -1e-4 {
        lo *= 0.5;
    }
    let target = mu.clamp(tire.evaluate(lo), tire.evaluate(hi));
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if tire.evaluate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Wheel speed giving slip `lambda` at axle speed `v`, consistent with the
/// load-and-speed dependent dynamic radius.
fn wheel_speed(vehicle: &VehicleParams, front: bool, fz: f64, v: f64, lambda: f64) -> f64 {
    let geometry = if front { &vehicle.tire_front } else { &vehicle.tire_rear };
    let mut omega = v / geometry.r_i;
    for _ in 0..6 {
        let r = VehicleParams::dynamic_radius(geometry, fz, omega, omega).r_dyn;
        omega = (1.0 + lambda) * v / r;
    }
    omega
}

struct Recorder {
    t: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(n: usize) -> Self {
        Self { t: Vec::new(), values: vec![Vec::new(); n] }
    }
}

/// Simulate `maneuver` and record every required channel at its sensor rate.
pub fn simulate_log<R: Rng + ?Sized>(
    vehicle: &VehicleParams,
    tires: &SimTires,
    maneuver: &Maneuver,
    rng: &mut R,
) -> Result<SensorLog> {
    vehicle.validate()?;
    let dec_correvit = decimation(maneuver.rates.correvit)?;
    let dec_imu = decimation(maneuver.rates.imu)?;
    let dec_can = decimation(maneuver.rates.can)?;
    let normal = |s: f64| Normal::new(0.0, s.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()));
    let n_vel = normal(maneuver.noise.velocity)?;
    let n_acc = normal(maneuver.noise.acceleration)?;
    let n_yaw = normal(maneuver.noise.yaw_rate)?;
    let n_steer = normal(maneuver.noise.steer)?;
    let n_wheel = normal(maneuver.noise.wheel_speed)?;
    let [b_ay, b_yaw, b_vy, b_steer] = maneuver.bias;

    let dt = 1.0 / STEP_RATE;
    let steps = (maneuver.duration * STEP_RATE).round() as usize;
    let (lf, lr) = (vehicle.wheelbase - vehicle.lr, vehicle.lr);
    let (mut vx, mut vy, mut r) = (maneuver.speed, 0.0, 0.0);
    let mut ax_prev = 0.0;

    let mut correvit = Recorder::new(2);
    let mut imu = Recorder::new(3);
    let mut can = Recorder::new(6);

    for k in 0..=steps {
        let t = k as f64 * dt;
        let phase = (t - maneuver.straight).max(0.0);
        let delta = maneuver.steer_amplitude * (2.0 * std::f64::consts::PI * maneuver.steer_frequency * phase).sin();

        let (fz_f, fz_r) = vehicle.vertical_loads(ax_prev, vx)?;
        let (v_front, v_rear) = vehicle.axle_velocities(vx, vy, r, delta);
        let alpha_f = -(v_front.vy / v_front.vx).atan();
        let alpha_r = -(v_rear.vy / v_rear.vx).atan();
        let fy_f_tf = fz_f * tires.front_lateral.evaluate(alpha_f);
        let fy_r = fz_r * tires.rear_lateral.evaluate(alpha_r);

        let resist = vehicle.drag(vx) + vehicle.rolling_resistance(vx);
        let fx_r = (vehicle.mass * SPEED_GAIN * (maneuver.speed - vx) + resist + fy_f_tf * delta.sin()).max(0.0);
        let lambda_r = invert_curve(&tires.rear_longitudinal, fx_r / fz_r);
        let fx_r = fz_r * tires.rear_longitudinal.evaluate(lambda_r);

        let fx_body = fx_r - fy_f_tf * delta.sin() - resist;
        let fy_body = fy_r + fy_f_tf * delta.cos();
        let ax = fx_body / vehicle.mass;
        let ay = fy_body / vehicle.mass;
        let yaw_accel = (lf * fy_f_tf * delta.cos() - lr * fy_r) / vehicle.izz;

        if k % dec_correvit == 0 {
            correvit.t.push(t);
            correvit.values[0].push(vx + n_vel.sample(rng));
            correvit.values[1].push(vy + b_vy + n_vel.sample(rng));
        }
        if k % dec_imu == 0 {
            imu.t.push(t);
            imu.values[0].push(ax + n_acc.sample(rng));
            imu.values[1].push(ay + b_ay + n_acc.sample(rng));
            imu.values[2].push(r + b_yaw + n_yaw.sample(rng));
        }
        if k % dec_can == 0 {
            let omega_f = wheel_speed(vehicle, true, fz_f, v_front.vx, 0.0);
            let omega_r = wheel_speed(vehicle, false, fz_r, v_rear.vx, lambda_r);
            let gear = 3.0 + maneuver.gear_shifts.iter().filter(|&&s| t >= s).count() as f64;
            can.t.push(t);
            can.values[0].push(delta + b_steer + n_steer.sample(rng));
            can.values[1].push(omega_f + n_wheel.sample(rng));
            can.values[2].push(omega_f + n_wheel.sample(rng));
            can.values[3].push(omega_r + n_wheel.sample(rng));
            can.values[4].push(omega_r + n_wheel.sample(rng));
            can.values[5].push(gear);
        }

        vx += (ax + r * vy) * dt;
        vy += (ay - r * vx) * dt;
        r += yaw_accel * dt;
        ax_prev = ax;
        if !(vx.is_finite() && vy.is_finite() && r.is_finite()) {
            return Err(Error::InvalidConfig(format!("simulation diverged at t = {t:.3} s")));
        }
    }

    let mut log = SensorLog::default();
    let mut put = |rec: &Recorder, channels: &[Channel]| -> Result<()> {
        for (ch, v) in channels.iter().zip(&rec.values) {
            log.insert(*ch, Series::new(rec.t.clone(), v.clone())?);
        }
        Ok(())
    };
    put(&correvit, &[Channel::Vx, Channel::Vy])?;
    put(&imu, &[Channel::Ax, Channel::Ay, Channel::YawRate])?;
    put(
        &can,
        &[Channel::SteerAngle, Channel::OmegaFl, Channel::OmegaFr, Channel::OmegaRl, Channel::OmegaRr, Channel::Gear],
    )?;
    log.rates.insert(SensorGroup::Correvit, maneuver.rates.correvit);
    log.rates.insert(SensorGroup::Imu, maneuver.rates.imu);
    log.rates.insert(SensorGroup::Can, maneuver.rates.can);
    Ok(log)
}

/// A mid-size racing car used by examples and tests.
pub fn example_vehicle() -> VehicleParams {
    use crate::vehicle_dynamics::{LsdParams, TireGeometry};
    VehicleParams {
        mass: 800.0,
        wheelbase: 2.9,
        lr: 1.4,
        h_cog: 0.3,
        izz: 1000.0,
        c_drag: 0.9,
        c_lift_front: 1.2,
        c_lift_rear: 1.5,
        f_roll: 0.012,
        tire_front: TireGeometry { r_i: 0.3, d_r: 1e-7, c_tire: 200_000.0 },
        tire_rear: TireGeometry { r_i: 0.31, d_r: 1e-7, c_tire: 200_000.0 },
        lsd: LsdParams { preload: 50.0, coast_coeff: 0.2, drive_coeff: 0.3, lock_speed: 0.5 },
        engine_brake_torque_max: 400.0,
        driveline_ratio: 3.0,
    }
}
