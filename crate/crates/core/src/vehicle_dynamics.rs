//! Single-track axle force and slip reconstruction from telemetry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Axle speeds at or below this value are excluded from slip computation (m/s).
pub const DEFAULT_MIN_SPEED: f64 = 3.0;

/// Per-axle tire geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireGeometry {
    /// Unloaded radius of the non-rotating tire (m).
    pub r_i: f64,
    /// Speed expansion factor (m s^2).
    pub d_r: f64,
    /// Global vertical tire stiffness (N/m).
    pub c_tire: f64,
}

/// Limited-slip differential settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsdParams {
    /// Preload torque (N m).
    pub preload: f64,
    /// Ramp coefficient applied to the input torque when coasting.
    pub coast_coeff: f64,
    /// Ramp coefficient applied to the input torque when driving.
    pub drive_coeff: f64,
    /// Wheel-speed difference (rad/s) at which the full locking torque is transferred.
    /// Below it the transferred torque scales linearly to zero so the clutch never
    /// pushes the wheel speeds past each other.
    #[serde(default = "LsdParams::default_lock_speed")]
    pub lock_speed: f64,
}

impl LsdParams {
    fn default_lock_speed() -> f64 {
        0.5
    }
}

/// Vehicle constants, all SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Wheelbase (m).
    pub wheelbase: f64,
    /// CoG to rear axle distance (m).
    pub lr: f64,
    /// CoG height (m).
    pub h_cog: f64,
    /// Yaw inertia (kg m^2).
    pub izz: f64,
    /// Drag coefficient, `0.5 rho cd A` (N s^2/m^2).
    pub c_drag: f64,
    /// Front aero downforce coefficient (N s^2/m^2).
    pub c_lift_front: f64,
    /// Rear aero downforce coefficient (N s^2/m^2).
    pub c_lift_rear: f64,
    /// Rolling resistance coefficient.
    pub f_roll: f64,
    pub tire_front: TireGeometry,
    pub tire_rear: TireGeometry,
    pub lsd: LsdParams,
    /// Maximum engine braking torque (N m) at the engine.
    pub engine_brake_torque_max: f64,
    /// Ratio between engine torque and rear axle torque.
    #[serde(default = "VehicleParams::default_driveline_ratio")]
    pub driveline_ratio: f64,
}

/// Per-axle forces of one frame (N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxleForces {
    pub fx_cog: f64,
    pub fx_f: f64,
    pub fx_r: f64,
    pub fy_f: f64,
    pub fy_r: f64,
    pub fz_f: f64,
    pub fz_r: f64,
    /// Front lateral force in the tire frame.
    pub fy_f_tf: f64,
}

/// Per-axle slip states of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipStates {
    pub lambda_f: f64,
    pub lambda_r: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
    pub r_dyn_f: f64,
    pub r_dyn_r: f64,
}

/// Result of [`VehicleParams::dynamic_radius`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRadius {
    pub r_dyn: f64,
    /// Speed-expanded unloaded radius.
    pub r_0: f64,
    /// Statically loaded radius.
    pub r_s: f64,
}

/// Velocity of an axle center expressed in that axle's wheel frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxleVelocity {
    pub vx: f64,
    pub vy: f64,
}

/// Filtered and offset-corrected channels of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameInput {
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
    pub steer: f64,
    pub omega_fl: f64,
    pub omega_fr: f64,
    pub omega_rl: f64,
    pub omega_rr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameState {
    pub forces: AxleForces,
    pub slip: SlipStates,
    pub t_lsd: f64,
}

impl VehicleParams {
    fn default_driveline_ratio() -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("vehicle: {what}")));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.lr > 0.0 && self.lr < self.wheelbase) {
            return bad("lr must lie in (0, wheelbase)");
        }
        if !(self.izz > 0.0) {
            return bad("izz must be positive");
        }
        for (axle, t) in [("front", &self.tire_front), ("rear", &self.tire_rear)] {
            if !(t.r_i > 0.0) {
                return bad(&format!("tire_{axle}.r_i must be positive"));
            }
            if !(t.c_tire > 0.0) {
                return bad(&format!("tire_{axle}.c_tire must be positive"));
            }
        }
        if !(self.lsd.lock_speed > 0.0) {
            return bad("lsd.lock_speed must be positive");
        }
        Ok(())
    }

    /// Drag force at speed `vx` (N).
    pub fn drag(&self, vx: f64) -> f64 {
        self.c_drag * vx * vx
    }

    /// Total vertical load including aero downforce (N).
    pub fn total_vertical_load(&self, vx: f64) -> f64 {
        self.mass * GRAVITY + (self.c_lift_front + self.c_lift_rear) * vx * vx
    }

    /// Rolling resistance at the instantaneous vertical load (N).
    pub fn rolling_resistance(&self, vx: f64) -> f64 {
        self.f_roll * self.total_vertical_load(vx)
    }

    /// `m ax + F_drag + F_roll`.
    pub fn longitudinal_cog_force(&self, ax: f64, vx: f64) -> f64 {
        self.mass * ax + self.drag(vx) + self.rolling_resistance(vx)
    }

    /// Quasi-static axle loads with longitudinal transfer and aero downforce.
    pub fn vertical_loads(&self, ax: f64, vx: f64) -> Result<(f64, f64)> {
        let l = self.wheelbase;
        let weight = self.mass * GRAVITY;
        let transfer = self.mass * ax * self.h_cog / l;
        let v2 = vx * vx;
        let fz_f = weight * self.lr / l - transfer + self.c_lift_front * v2;
        let fz_r = weight * (l - self.lr) / l + transfer + self.c_lift_rear * v2;
        if fz_f <= 0.0 || fz_r <= 0.0 {
            return Err(Error::NonPositiveLoad { front: fz_f, rear: fz_r });
        }
        Ok((fz_f, fz_r))
    }

    /// Locking torque of the differential, signed to oppose the rear wheel speed difference.
    pub fn lsd_torque(&self, fx_r: f64, r_dyn_r: f64, omega_rl: f64, omega_rr: f64) -> f64 {
        let dw = omega_rr - omega_rl;
        if dw == 0.0 {
            return 0.0;
        }
        let brake_limit = self.engine_brake_torque_max * self.driveline_ratio;
        let t_input = (fx_r * r_dyn_r).max(-brake_limit);
        let ramp = if t_input > 0.0 { self.lsd.drive_coeff } else { self.lsd.coast_coeff };
        let locking = self.lsd.preload + ramp * t_input.abs();
        let equalize = locking * (dw.abs() / self.lsd.lock_speed).min(1.0);
        -dw.signum() * locking.min(equalize)
    }

    /// Lateral axle forces from the yaw moment balance.
    pub fn lateral_axle_forces(&self, ay: f64, yaw_accel: f64, t_lsd: f64) -> (f64, f64) {
        let fy_f = (self.lr * self.mass * ay - self.izz * yaw_accel + t_lsd) / self.wheelbase;
        (fy_f, self.mass * ay - fy_f)
    }

    pub fn dynamic_radius(geometry: &TireGeometry, fz: f64, omega_left: f64, omega_right: f64) -> DynamicRadius {
        let omega = 0.5 * (omega_left + omega_right);
        let r_0 = geometry.r_i + geometry.d_r * omega * omega;
        let r_s = geometry.r_i - fz / (2.0 * geometry.c_tire);
        DynamicRadius { r_dyn: r_0 * (2.0 / 3.0) + r_s * (1.0 / 3.0), r_0, r_s }
    }

    /// Front and rear axle velocities in the respective wheel frames.
    pub fn axle_velocities(&self, vx: f64, vy: f64, yaw_rate: f64, delta: f64) -> (AxleVelocity, AxleVelocity) {
        let lf = self.wheelbase - self.lr;
        let vy_front = vy + yaw_rate * lf;
        let (s, c) = delta.sin_cos();
        let front = AxleVelocity { vx: vx * c + vy_front * s, vy: -vx * s + vy_front * c };
        let rear = AxleVelocity { vx, vy: vy - yaw_rate * self.lr };
        (front, rear)
    }

    /// Run the full force and slip chain on one frame.
    pub fn process_frame(&self, f: &FrameInput, min_speed: f64) -> Result<FrameState> {
        let fx_cog = self.longitudinal_cog_force(f.ax, f.vx);
        let (fz_f, fz_r) = self.vertical_loads(f.ax, f.vx)?;
        let (fx_f, fx_r) = split_longitudinal(fx_cog, fz_f, fz_r);
        let r_f = Self::dynamic_radius(&self.tire_front, fz_f, f.omega_fl, f.omega_fr);
        let r_r = Self::dynamic_radius(&self.tire_rear, fz_r, f.omega_rl, f.omega_rr);
        let t_lsd = self.lsd_torque(fx_r, r_r.r_dyn, f.omega_rl, f.omega_rr);
        let (fy_f, fy_r) = self.lateral_axle_forces(f.ay, f.yaw_accel, t_lsd);
        let fy_f_tf = front_tire_frame(fy_f, fx_f, f.steer)?;

        let (v_front, v_rear) = self.axle_velocities(f.vx, f.vy, f.yaw_rate, f.steer);
        let (lambda_f, alpha_f) = axle_slip(v_front, 0.5 * (f.omega_fl + f.omega_fr), r_f.r_dyn, min_speed)?;
        let (lambda_r, alpha_r) = axle_slip(v_rear, 0.5 * (f.omega_rl + f.omega_rr), r_r.r_dyn, min_speed)?;

        Ok(FrameState {
            forces: AxleForces { fx_cog, fx_f, fx_r, fy_f, fy_r, fz_f, fz_r, fy_f_tf },
            slip: SlipStates { lambda_f, lambda_r, alpha_f, alpha_r, r_dyn_f: r_f.r_dyn, r_dyn_r: r_r.r_dyn },
            t_lsd,
        })
    }
}

/// Split the CoG longitudinal force onto the axles of a rear-wheel-drive car.
pub fn split_longitudinal(fx_cog: f64, fz_f: f64, fz_r: f64) -> (f64, f64) {
    let fx_f = if fx_cog > 0.0 { 0.0 } else { fx_cog * fz_f / (fz_f + fz_r) };
    (fx_f, fx_cog - fx_f)
}

/// Front lateral force rotated into the steered tire frame.
pub fn front_tire_frame(fy_f: f64, fx_f: f64, delta: f64) -> Result<f64> {
    if !(delta.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::SteeringOutOfRange(delta));
    }
    Ok((fy_f - fx_f * delta.sin()) / delta.cos())
}

/// Slip ratio and slip angle of one axle.
pub fn axle_slip(v: AxleVelocity, omega_avg: f64, r_dyn: f64, min_speed: f64) -> Result<(f64, f64)> {
    if v.vx <= min_speed {
        return Err(Error::LowSpeed(v.vx));
    }
    let lambda = (omega_avg * r_dyn - v.vx) / v.vx;
    let alpha = -(v.vy / v.vx).atan();
    Ok((lambda, alpha))
}
