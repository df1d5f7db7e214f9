//! Mode-switching PID velocity controller in the style of a stock VTOL
//! autopilot: a multirotor loop, a fixed-wing loop and a linear blend between
//! them selected by airspeed.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::model::frames::wrap_angle;
use crate::model::{PlantState, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlightMode {
    Multirotor,
    Transition,
    FixedWing,
}

impl FlightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FlightMode::Multirotor => "multirotor",
            FlightMode::Transition => "transition",
            FlightMode::FixedWing => "fixed_wing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Horizontal speed cap in multirotor mode, m/s.
    pub mr_max_speed: f64,
    /// Airspeed where the transition starts, m/s.
    pub blend_airspeed: f64,
    /// Airspeed where fixed-wing mode takes over, m/s.
    pub transition_airspeed: f64,
    /// Multirotor velocity PI gains, (m/s²) per (m/s) and per m.
    pub mr_kp: [f64; 3],
    pub mr_ki: [f64; 3],
    /// Largest roll/pitch setpoint, rad.
    pub max_tilt_angle: f64,
    /// Fixed-wing airspeed PI on thrust, N per (m/s) and per m.
    pub fw_kp_airspeed: f64,
    pub fw_ki_airspeed: f64,
    pub fw_thrust_trim: f64,
    /// Pitch per unit vertical-speed error, rad per (m/s).
    pub fw_kp_climb: f64,
    pub fw_pitch_trim: f64,
    /// Turn rate per unit course error, 1/s.
    pub fw_kp_course: f64,
    /// Bound on each integrator state.
    pub integrator_limit: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            mr_max_speed: 10.0,
            blend_airspeed: 12.0,
            transition_airspeed: 20.0,
            mr_kp: [1.2, 1.2, 2.5],
            mr_ki: [0.15, 0.15, 0.5],
            max_tilt_angle: 0.7,
            fw_kp_airspeed: 6.0,
            fw_ki_airspeed: 1.0,
            fw_thrust_trim: 70.0,
            fw_kp_climb: 0.08,
            fw_pitch_trim: 0.0,
            fw_kp_course: 0.8,
            integrator_limit: 10.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.mr_max_speed
            && self.mr_max_speed < self.blend_airspeed
            && self.blend_airspeed < self.transition_airspeed)
        {
            return Err("baseline speeds must satisfy 0 < mr_max_speed < blend_airspeed < transition_airspeed".into());
        }
        if !(self.max_tilt_angle > 0.0 && self.max_tilt_angle < FRAC_PI_2) {
            return Err("baseline max_tilt_angle must lie in (0, π/2)".into());
        }
        Ok(())
    }

    pub fn mode(&self, va: f64) -> FlightMode {
        if va < self.blend_airspeed {
            FlightMode::Multirotor
        } else if va < self.transition_airspeed {
            FlightMode::Transition
        } else {
            FlightMode::FixedWing
        }
    }

    /// Fraction of the way through the transition band, in [0, 1].
    pub fn blend(&self, va: f64) -> f64 {
        ((va - self.blend_airspeed) / (self.transition_airspeed - self.blend_airspeed)).clamp(0.0, 1.0)
    }

    /// Rotor tilt target, ramping from 0 to 90° across the transition band.
    pub fn tilt_target(&self, va: f64) -> f64 {
        self.blend(va) * FRAC_PI_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineOutput {
    pub psi_sp: Vector3<f64>,
    pub thrust_sp: f64,
    pub tilt_target: [f64; 4],
    pub mode: FlightMode,
}

/// Baseline controller with its integrator and heading memory.
#[derive(Debug, Clone)]
pub struct BaselineController {
    pub cfg: BaselineConfig,
    pub params: VehicleParams,
    /// Controller period, s.
    pub dt: f64,
    mr_integral: Vector3<f64>,
    fw_integral: f64,
    heading: Option<f64>,
}

impl BaselineController {
    pub fn new(cfg: BaselineConfig, params: VehicleParams, dt: f64) -> Self {
        Self { cfg, params, dt, mr_integral: Vector3::zeros(), fw_integral: 0.0, heading: None }
    }

    pub fn reset(&mut self) {
        self.mr_integral = Vector3::zeros();
        self.fw_integral = 0.0;
        self.heading = None;
    }

    pub fn step(&mut self, v_sp: &Vector3<f64>, state: &PlantState) -> BaselineOutput {
        let c = self.cfg;
        let va = state.airdata(&Vector3::zeros(), &self.params).va;
        let mode = c.mode(va);
        let s = c.blend(va);

        let heading = self.heading.get_or_insert(state.attitude.z);
        if v_sp.xy().norm() > 1.0 {
            *heading = v_sp.y.atan2(v_sp.x);
        }
        let yaw_sp = *heading;

        let (mr_att, mr_thrust) = self.multirotor(v_sp, state, mode);
        let (fw_att, fw_thrust) = self.fixed_wing(v_sp, state, va, mode);
        let roll = (1.0 - s) * mr_att.0 + s * fw_att.0;
        let pitch = (1.0 - s) * mr_att.1 + s * fw_att.1;
        let p = &self.params;
        let thrust = ((1.0 - s) * mr_thrust + s * fw_thrust).clamp(0.0, p.collective_thrust_max());
        let lim = c.max_tilt_angle;
        BaselineOutput {
            psi_sp: Vector3::new(roll.clamp(-lim, lim), pitch.clamp(-lim, lim), yaw_sp),
            thrust_sp: thrust,
            tilt_target: [p.clamp_tilt(c.tilt_target(va)); 4],
            mode,
        }
    }

    fn multirotor(&mut self, v_sp: &Vector3<f64>, state: &PlantState, mode: FlightMode) -> ((f64, f64), f64) {
        let c = self.cfg;
        let p = &self.params;
        let mut target = *v_sp;
        let horiz = v_sp.xy().norm();
        if v_sp.norm() < c.blend_airspeed && horiz > c.mr_max_speed {
            let k = c.mr_max_speed / horiz;
            target.x *= k;
            target.y *= k;
        }
        let err = target - state.velocity;
        if mode != FlightMode::FixedWing {
            self.mr_integral += err * self.dt;
            self.mr_integral = self.mr_integral.map(|v| v.clamp(-c.integrator_limit, c.integrator_limit));
        }
        let accel = Vector3::from_fn(|i, _| c.mr_kp[i] * err[i] + c.mr_ki[i] * self.mr_integral[i]);
        // Thrust force needed in NED, then expressed in the heading frame.
        let mut force = p.mass * (accel - Vector3::new(0.0, 0.0, p.gravity));
        // Vertical thrust has priority: the horizontal part gets what is left
        // of the thrust box and the tilt limit.
        let t_max = p.collective_thrust_max();
        force.z = force.z.clamp(-t_max, 0.0);
        let h = force.xy().norm();
        let h_max = (t_max * t_max - force.z * force.z).max(0.0).sqrt().min(-force.z * c.max_tilt_angle.tan());
        if h > h_max {
            force.x *= h_max / h;
            force.y *= h_max / h;
        }
        let (sy, cy) = state.attitude.z.sin_cos();
        let fx = cy * force.x + sy * force.y;
        let fy = -sy * force.x + cy * force.y;
        let pitch = (-fx).atan2(-force.z);
        let roll = fy.atan2((fx * fx + force.z * force.z).sqrt());
        ((roll, pitch), force.norm())
    }

    fn fixed_wing(&mut self, v_sp: &Vector3<f64>, state: &PlantState, va: f64, mode: FlightMode) -> ((f64, f64), f64) {
        let c = self.cfg;
        let p = &self.params;
        let speed_sp = v_sp.xy().norm();
        let err = speed_sp - va;
        if mode != FlightMode::Multirotor {
            self.fw_integral = (self.fw_integral + err * self.dt).clamp(-c.integrator_limit, c.integrator_limit);
        }
        let thrust = c.fw_thrust_trim + c.fw_kp_airspeed * err + c.fw_ki_airspeed * self.fw_integral;
        let pitch = c.fw_pitch_trim + c.fw_kp_climb * (state.velocity.z - v_sp.z);
        let course = state.velocity.y.atan2(state.velocity.x);
        let course_sp = v_sp.y.atan2(v_sp.x);
        let turn_rate = c.fw_kp_course * wrap_angle(course_sp - course);
        let roll = (va.max(1.0) * turn_rate / p.gravity).atan();
        ((roll, pitch), thrust)
    }
}
