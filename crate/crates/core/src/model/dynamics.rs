use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::aero::{self, AirData, Surfaces};
use super::rotor::rotor_wrench;
use super::{frames, ModelError, VehicleParams, Wrench};

/// Pitch magnitude beyond which the Euler kinematics are considered singular.
pub const GIMBAL_LIMIT: f64 = 89.0 * std::f64::consts::PI / 180.0;

/// How the tilt servos are driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TiltCommand {
    /// Direct tilt rate, rad/s.
    Rate([f64; 4]),
    /// Target angle tracked by the rate-limited servo, rad.
    Target([f64; 4]),
}

/// One full set of actuator commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    /// Normalized rotor speeds in [0, 1].
    pub rotor_speed: [f64; 4],
    /// Aileron left/right, elevator, rudder in [-1, 1].
    pub surfaces: [f64; 4],
    pub tilt: TiltCommand,
}

impl ActuatorCommand {
    pub fn hover(p: &VehicleParams) -> Self {
        Self { rotor_speed: [p.hover_rotor_speed(); 4], surfaces: [0.0; 4], tilt: TiltCommand::Target([0.0; 4]) }
    }

    /// Clamps every component into its box.
    pub fn saturated(mut self, p: &VehicleParams) -> Self {
        for w in &mut self.rotor_speed {
            *w = w.clamp(0.0, 1.0);
        }
        for s in &mut self.surfaces {
            *s = s.clamp(-1.0, 1.0);
        }
        self.tilt = match self.tilt {
            TiltCommand::Rate(r) => TiltCommand::Rate(r.map(|v| v.clamp(-p.tilt_rate_max, p.tilt_rate_max))),
            TiltCommand::Target(t) => TiltCommand::Target(t.map(|v| p.clamp_tilt(v))),
        };
        self
    }
}

/// Snapshot of the simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// NED position, m.
    pub position: Vector3<f64>,
    /// NED velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Roll, pitch, yaw, rad.
    pub attitude: Vector3<f64>,
    /// Body rates p, q, r, rad/s.
    pub body_rates: Vector3<f64>,
    /// Rotor tilt angles, rad.
    pub tilt: [f64; 4],
    /// Last applied actuator command.
    pub actuators: ActuatorCommand,
}

impl PlantState {
    /// Level hover at the origin with trimmed rotors.
    pub fn hover(p: &VehicleParams) -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Vector3::zeros(),
            body_rates: Vector3::zeros(),
            tilt: [0.0; 4],
            actuators: ActuatorCommand::hover(p),
        }
    }

    pub fn airdata(&self, wind: &Vector3<f64>, p: &VehicleParams) -> AirData {
        aero::airdata(&self.velocity, &self.attitude, wind, p.aero.rho)
    }

    pub fn is_finite(&self) -> bool {
        let v = [self.position, self.velocity, self.attitude, self.body_rates];
        v.iter().all(|x| x.iter().all(|c| c.is_finite())) && self.tilt.iter().all(|c| c.is_finite())
    }

    pub fn mean_tilt(&self) -> f64 {
        self.tilt.iter().sum::<f64>() / 4.0
    }
}

/// Time derivative of the integrated part of [`PlantState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub body_rates: Vector3<f64>,
    pub tilt: [f64; 4],
}

/// Force and moment breakdown at one instant, body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchBreakdown {
    pub rotor: Wrench,
    pub aero: Wrench,
    pub gravity: Wrench,
}

impl WrenchBreakdown {
    pub fn total(&self) -> Wrench {
        self.rotor + self.aero + self.gravity
    }
}

pub fn wrench_breakdown(
    state: &PlantState,
    cmd: &ActuatorCommand,
    wind: &Vector3<f64>,
    p: &VehicleParams,
) -> Result<WrenchBreakdown, ModelError> {
    let ad = state.airdata(wind, p);
    Ok(WrenchBreakdown {
        rotor: rotor_wrench(&cmd.rotor_speed, &state.tilt, p)?,
        aero: aero::aero_wrench(&ad, &Surfaces::from_array(cmd.surfaces), &p.aero),
        gravity: super::rotor::gravity_wrench(&state.attitude, p),
    })
}

fn servo_rate(state_tilt: &[f64; 4], cmd: &TiltCommand, p: &VehicleParams) -> [f64; 4] {
    let lim = p.tilt_rate_max;
    match cmd {
        TiltCommand::Rate(r) => r.map(|v| v.clamp(-lim, lim)),
        TiltCommand::Target(t) => {
            let mut out = [0.0; 4];
            for i in 0..4 {
                let target = p.clamp_tilt(t[i]);
                out[i] = ((target - state_tilt[i]) / p.servo_time_constant).clamp(-lim, lim);
            }
            out
        }
    }
}

/// Rigid-body derivative with zero wind.
pub fn total_derivative(
    state: &PlantState,
    cmd: &ActuatorCommand,
    p: &VehicleParams,
) -> Result<StateDerivative, ModelError> {
    total_derivative_in_wind(state, cmd, &Vector3::zeros(), p)
}

pub fn total_derivative_in_wind(
    state: &PlantState,
    cmd: &ActuatorCommand,
    wind: &Vector3<f64>,
    p: &VehicleParams,
) -> Result<StateDerivative, ModelError> {
    if state.attitude.y.abs() > GIMBAL_LIMIT {
        return Err(ModelError::GimbalProximity(state.attitude.y));
    }
    let total = wrench_breakdown(state, cmd, wind, p)?.total();
    let r = frames::body_to_inertial(&state.attitude);
    let w = state.body_rates;
    let inertia = p.inertia_diag;
    let gyro = w.cross(&inertia.component_mul(&w));
    Ok(StateDerivative {
        position: state.velocity,
        velocity: r * total.force / p.mass,
        attitude: frames::euler_kinematics(&state.attitude) * w,
        body_rates: (total.moment - gyro).component_div(&inertia),
        tilt: servo_rate(&state.tilt, &cmd.tilt, p),
    })
}

fn advance(s: &PlantState, d: &StateDerivative, h: f64) -> PlantState {
    let mut out = *s;
    out.position += d.position * h;
    out.velocity += d.velocity * h;
    out.attitude += d.attitude * h;
    out.body_rates += d.body_rates * h;
    for i in 0..4 {
        out.tilt[i] += d.tilt[i] * h;
    }
    out
}

/// One classical Runge-Kutta step with the command held over the interval.
pub fn integrate_rk4(
    state: &PlantState,
    cmd: &ActuatorCommand,
    dt: f64,
    p: &VehicleParams,
) -> Result<PlantState, ModelError> {
    integrate_rk4_in_wind(state, cmd, &Vector3::zeros(), dt, p)
}

pub fn integrate_rk4_in_wind(
    state: &PlantState,
    cmd: &ActuatorCommand,
    wind: &Vector3<f64>,
    dt: f64,
    p: &VehicleParams,
) -> Result<PlantState, ModelError> {
    if !(dt > 0.0) {
        return Err(ModelError::InvalidStep(dt));
    }
    let f = |s: &PlantState| total_derivative_in_wind(s, cmd, wind, p);
    let k1 = f(state)?;
    let k2 = f(&advance(state, &k1, 0.5 * dt))?;
    let k3 = f(&advance(state, &k2, 0.5 * dt))?;
    let k4 = f(&advance(state, &k3, dt))?;
    let mut next = *state;
    let w = dt / 6.0;
    next.position += (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) * w;
    next.velocity += (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * w;
    next.attitude += (k1.attitude + 2.0 * k2.attitude + 2.0 * k3.attitude + k4.attitude) * w;
    next.body_rates += (k1.body_rates + 2.0 * k2.body_rates + 2.0 * k3.body_rates + k4.body_rates) * w;
    for i in 0..4 {
        next.tilt[i] += (k1.tilt[i] + 2.0 * k2.tilt[i] + 2.0 * k3.tilt[i] + k4.tilt[i]) * w;
        next.tilt[i] = p.clamp_tilt(next.tilt[i]);
    }
    next.attitude.z = frames::wrap_angle(next.attitude.z);
    next.actuators = *cmd;
    if !next.is_finite() {
        return Err(ModelError::NonFinite("integrated state"));
    }
    Ok(next)
}
