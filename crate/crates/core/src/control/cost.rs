//! MPC objective: velocity tracking, state and input penalties and the
//! exponential tilt/speed soft constraint.
//!
//! Every term is a weighted square, so the stage cost is written as a
//! residual vector whose squared norm is the cost. The solver works on the
//! residuals directly.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::mpc::{MpcInput, MpcState};
use crate::model::frames::body_to_inertial;

/// Constants of J_soft = exp(a·v·χ̄ + b·χ̄ + c·v + d), with χ̄ in degrees and
/// v the body-forward speed in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for SoftConstants {
    fn default() -> Self {
        Self { a: -0.33, b: 1.8, c: -0.477, d: -2.303 }
    }
}

/// Exponent cap that keeps the residual and its square finite.
pub const SOFT_EXPONENT_CAP: f64 = 600.0;

impl SoftConstants {
    pub fn exponent(&self, v_fwd: f64, chi_mean_deg: f64) -> f64 {
        (self.a * v_fwd * chi_mean_deg + self.b * chi_mean_deg + self.c * v_fwd + self.d).min(SOFT_EXPONENT_CAP)
    }

    pub fn cost(&self, v_fwd: f64, chi_mean_deg: f64) -> f64 {
        self.exponent(v_fwd, chi_mean_deg).exp()
    }
}

/// Diagonal weights of the quadratic terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcWeights {
    pub q_ref: [f64; 3],
    pub q_f: [f64; 3],
    pub q_psi: [f64; 3],
    pub q_psidot: [f64; 3],
    pub r_thrust: f64,
    pub r_tilt_rate: f64,
    pub r_psi_d: [f64; 3],
    /// Thrust is weighted as r_thrust·(T / thrust_scale)². 1 weights newtons directly.
    pub thrust_scale: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            q_ref: [20.0, 10.0, 50.0],
            q_f: [20.0, 10.0, 50.0],
            q_psi: [10.0, 20.0, 10.0],
            q_psidot: [3.0, 3.0, 3.0],
            r_thrust: 0.025,
            r_tilt_rate: 1.0,
            r_psi_d: [10.0, 20.0, 10.0],
            thrust_scale: 92.0,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = self
            .q_ref
            .iter()
            .chain(&self.q_f)
            .chain(&self.q_psi)
            .chain(&self.q_psidot)
            .chain(&self.r_psi_d)
            .chain([&self.r_thrust, &self.r_tilt_rate]);
        if all.into_iter().any(|w| !(*w >= 0.0)) {
            return Err("MPC weights must be non-negative".into());
        }
        if !(self.thrust_scale > 0.0) {
            return Err("thrust_scale must be positive".into());
        }
        Ok(())
    }
}

pub const STAGE_RESIDUALS: usize = 18;
pub const TERMINAL_RESIDUALS: usize = 13;

/// Speed along the body x axis.
pub fn forward_speed(x: &MpcState) -> f64 {
    (body_to_inertial(&x.psi).transpose() * x.v).x
}

fn state_residuals(
    x: &MpcState,
    v_sp: &Vector3<f64>,
    psi_ref: &Vector3<f64>,
    w: &MpcWeights,
    soft: &SoftConstants,
    r: &mut [f64],
) {
    let dv = x.v - v_sp;
    for i in 0..3 {
        r[i] = w.q_ref[i].sqrt() * dv[i];
        r[3 + i] = w.q_psi[i].sqrt() * (x.psi[i] - psi_ref[i]);
        r[6 + i] = w.q_psidot[i].sqrt() * x.psi_dot[i];
    }
    let chi_deg = (x.chi.iter().sum::<f64>() / 4.0).to_degrees();
    r[9] = (0.5 * soft.exponent(forward_speed(x), chi_deg)).exp();
}

/// Stage residuals; their squared norm is the stage cost. Attitude and
/// attitude setpoint are measured from `psi_ref`.
pub fn stage_residuals(
    x: &MpcState,
    u: &MpcInput,
    v_sp: &Vector3<f64>,
    psi_ref: &Vector3<f64>,
    w: &MpcWeights,
    soft: &SoftConstants,
    r: &mut [f64; STAGE_RESIDUALS],
) {
    state_residuals(x, v_sp, psi_ref, w, soft, &mut r[..10]);
    r[10] = w.r_thrust.sqrt() * u.thrust / w.thrust_scale;
    for i in 0..4 {
        r[11 + i] = w.r_tilt_rate.sqrt() * u.chi_rate[i];
    }
    for i in 0..3 {
        r[15 + i] = w.r_psi_d[i].sqrt() * (u.psi_d[i] - psi_ref[i]);
    }
}

/// Terminal residuals: the state part of a stage plus the final velocity term.
pub fn terminal_residuals(
    x: &MpcState,
    v_sp: &Vector3<f64>,
    psi_ref: &Vector3<f64>,
    w: &MpcWeights,
    soft: &SoftConstants,
    r: &mut [f64; TERMINAL_RESIDUALS],
) {
    state_residuals(x, v_sp, psi_ref, w, soft, &mut r[..10]);
    let dv = x.v - v_sp;
    for i in 0..3 {
        r[10 + i] = w.q_f[i].sqrt() * dv[i];
    }
}

/// Stage cost J(x, u) for the given setpoint, attitude measured from level.
pub fn mpc_cost(x: &MpcState, u: &MpcInput, v_sp: &Vector3<f64>, w: &MpcWeights, soft: &SoftConstants) -> f64 {
    let mut r = [0.0; STAGE_RESIDUALS];
    stage_residuals(x, u, v_sp, &Vector3::zeros(), w, soft, &mut r);
    r.iter().map(|v| v * v).sum()
}

/// Cost of the last node of the horizon.
pub fn mpc_terminal_cost(x: &MpcState, v_sp: &Vector3<f64>, w: &MpcWeights, soft: &SoftConstants) -> f64 {
    let mut r = [0.0; TERMINAL_RESIDUALS];
    terminal_residuals(x, v_sp, &Vector3::zeros(), w, soft, &mut r);
    r.iter().map(|v| v * v).sum()
}
