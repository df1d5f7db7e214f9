use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::model::frames::wrap_angle;
use crate::model::{PlantState, VehicleParams};

/// Cascaded attitude loop gains: angle error → rate setpoint → torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttitudeGains {
    /// Angle-to-rate gain per axis, 1/s.
    pub kp_att: [f64; 3],
    /// Rate-error gain per axis, N·m·s/rad.
    pub kp_rate: [f64; 3],
    /// Gain on the change in rate since the previous tick, N·m·s/rad.
    pub kd_rate: [f64; 3],
    /// Rate setpoint limit per axis, rad/s.
    pub rate_limit: [f64; 3],
}

impl AttitudeGains {
    /// Rate gains proportional to the vehicle inertia.
    pub fn for_vehicle(p: &VehicleParams) -> Self {
        let i = p.inertia_diag;
        Self {
            kp_att: [3.0; 3],
            kp_rate: [8.0 * i.x, 8.0 * i.y, 8.0 * i.z],
            kd_rate: [0.4 * i.x, 0.4 * i.y, 0.4 * i.z],
            rate_limit: [PI; 3],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = self.kp_att.iter().chain(&self.kp_rate).chain(&self.kd_rate).chain(&self.rate_limit);
        if all.into_iter().any(|g| !(*g >= 0.0)) {
            return Err("attitude gains must be non-negative".into());
        }
        Ok(())
    }
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self::for_vehicle(&VehicleParams::default())
    }
}

/// Setpoint minus attitude, with the yaw difference wrapped.
pub fn attitude_error(psi_sp: &Vector3<f64>, psi: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(psi_sp.x - psi.x, psi_sp.y - psi.y, wrap_angle(psi_sp.z - psi.z))
}

/// Proportional rate setpoint, clamped to the rate box.
pub fn rate_setpoint(err: &Vector3<f64>, g: &AttitudeGains) -> Vector3<f64> {
    Vector3::from_fn(|i, _| (g.kp_att[i] * err[i]).clamp(-g.rate_limit[i], g.rate_limit[i]))
}

/// Torque from the rate loop. Shared by the plant-side attitude loop and the
/// MPC prediction model so both see the same inner loop.
pub fn inner_loop_torque(
    err: &Vector3<f64>,
    rate: &Vector3<f64>,
    prev_rate: &Vector3<f64>,
    g: &AttitudeGains,
) -> Vector3<f64> {
    let sp = rate_setpoint(err, g);
    Vector3::from_fn(|i, _| g.kp_rate[i] * (sp[i] - rate[i]) + g.kd_rate[i] * (prev_rate[i] - rate[i]))
}

/// Torque setpoint for the allocator. Body rates stand in for the attitude
/// rates, as in the prediction model.
pub fn attitude_step(
    psi_sp: &Vector3<f64>,
    state: &PlantState,
    gains: &AttitudeGains,
    prev_rate: &Vector3<f64>,
) -> Vector3<f64> {
    let err = attitude_error(psi_sp, &state.attitude);
    inner_loop_torque(&err, &state.body_rates, prev_rate, gains)
}
