//! Actuator failures: bound overrides, servo jams and the triggers that
//! switch them on.

use serde::{Deserialize, Serialize};

use super::{nominal_bounds, NUM_ACTUATORS};
use crate::model::frames::wrap_angle;
use crate::model::{PlantState, VehicleParams};

/// Condition that activates a failure. Once met, the failure stays active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    /// Simulation time, s.
    AtTime(f64),
    /// Yaw angle reached, rad.
    AtYaw(f64),
    /// Airspeed reached, m/s.
    AtAirspeed(f64),
}

/// What a failure does to the actuators, in internal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    /// Absolute bounds on the eight allocated actuators.
    pub lb_abs: [f64; NUM_ACTUATORS],
    pub ub_abs: [f64; NUM_ACTUATORS],
    /// Absolute bounds on the four tilt commands, rad.
    pub tilt_lb: [f64; 4],
    pub tilt_ub: [f64; 4],
    /// Servo index and the angle it is stuck at, rad.
    pub tilt_jam: Option<(usize, f64)>,
    pub trigger: Trigger,
}

impl FailureSpec {
    /// A failure that changes nothing.
    pub fn none(trigger: Trigger, p: &VehicleParams) -> Self {
        let (lb_abs, ub_abs) = nominal_bounds();
        Self { lb_abs, ub_abs, tilt_lb: [p.tilt_range[0]; 4], tilt_ub: [p.tilt_range[1]; 4], tilt_jam: None, trigger }
    }

    /// Rotor `i` (0-based) stops.
    pub fn motor_out(i: usize, trigger: Trigger, p: &VehicleParams) -> Self {
        let mut f = Self::none(trigger, p);
        f.lb_abs[i] = 0.0;
        f.ub_abs[i] = 0.0;
        f
    }

    /// Servo `i` (0-based) stuck at `angle` rad.
    pub fn servo_jam(i: usize, angle: f64, trigger: Trigger, p: &VehicleParams) -> Self {
        let mut f = Self::none(trigger, p);
        f.tilt_jam = Some((i, angle));
        f
    }

    pub fn validate(&self, p: &VehicleParams) -> Result<(), String> {
        let (lb, ub) = nominal_bounds();
        for i in 0..NUM_ACTUATORS {
            if !(lb[i] <= self.lb_abs[i] && self.lb_abs[i] <= self.ub_abs[i] && self.ub_abs[i] <= ub[i]) {
                return Err(format!("failure bounds for actuator {} are inconsistent", i + 1));
            }
        }
        for i in 0..4 {
            if !(self.tilt_lb[i] <= self.tilt_ub[i]) {
                return Err(format!("failure tilt bounds for servo {} are inconsistent", i + 1));
            }
        }
        if let Some((i, angle)) = self.tilt_jam {
            if i >= 4 {
                return Err(format!("servo index {} out of range", i + 1));
            }
            if !(p.tilt_range[0]..=p.tilt_range[1]).contains(&angle) {
                return Err(format!("jam angle {:.1} deg outside the tilt range", angle.to_degrees()));
            }
        }
        let ok = match self.trigger {
            Trigger::AtTime(t) => t >= 0.0,
            Trigger::AtYaw(y) => y.is_finite(),
            Trigger::AtAirspeed(v) => v >= 0.0,
        };
        if !ok {
            return Err("failure trigger value is invalid".into());
        }
        Ok(())
    }
}

/// How a `[[failure]]` block names its effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Rotor stops completely.
    MotorOut,
    /// Rotor speed capped at `value` (normalized).
    RotorLimit,
    /// Surface deflection limited to ±`value` (normalized).
    SurfaceLimit,
    /// Servo stuck at `value` degrees.
    ServoJam,
    /// Servo travel limited to [`lower`, `upper`] degrees.
    ServoLimit,
}

/// Trigger as written in the configuration file, with angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TriggerEntry {
    AtTime(f64),
    AtYawDeg(f64),
    AtAirspeed(f64),
}

/// One `[[failure]]` block. Indices count from 1: rotors and servos 1–4,
/// surfaces 1–4 as aileron left, aileron right, elevator, rudder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEntry {
    pub kind: FailureKind,
    pub index: usize,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
    pub trigger: TriggerEntry,
}

impl FailureEntry {
    pub fn to_spec(&self, p: &VehicleParams) -> Result<FailureSpec, String> {
        if !(1..=4).contains(&self.index) {
            return Err(format!("failure index must be 1 to 4, got {}", self.index));
        }
        let i = self.index - 1;
        let trigger = match self.trigger {
            TriggerEntry::AtTime(t) => Trigger::AtTime(t),
            TriggerEntry::AtYawDeg(d) => Trigger::AtYaw(d.to_radians()),
            TriggerEntry::AtAirspeed(v) => Trigger::AtAirspeed(v),
        };
        let value = || self.value.ok_or_else(|| format!("{:?} failure needs a value", self.kind));
        let mut f = FailureSpec::none(trigger, p);
        match self.kind {
            FailureKind::MotorOut => f = FailureSpec::motor_out(i, trigger, p),
            FailureKind::RotorLimit => f.ub_abs[i] = value()?,
            FailureKind::SurfaceLimit => {
                let v = value()?;
                f.lb_abs[4 + i] = -v;
                f.ub_abs[4 + i] = v;
            }
            FailureKind::ServoJam => f.tilt_jam = Some((i, value()?.to_radians())),
            FailureKind::ServoLimit => {
                f.tilt_lb[i] = self.lower.map_or(p.tilt_range[0], f64::to_radians);
                f.tilt_ub[i] = self.upper.map_or(p.tilt_range[1], f64::to_radians);
            }
        }
        f.validate(p)?;
        Ok(f)
    }
}

/// Combined effect of every active failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveFailure {
    pub lb: [f64; NUM_ACTUATORS],
    pub ub: [f64; NUM_ACTUATORS],
    pub tilt_lb: [f64; 4],
    pub tilt_ub: [f64; 4],
    pub tilt_jam: [Option<f64>; 4],
}

impl ActiveFailure {
    pub fn nominal() -> Self {
        let (lb, ub) = nominal_bounds();
        Self { lb, ub, tilt_lb: [f64::NEG_INFINITY; 4], tilt_ub: [f64::INFINITY; 4], tilt_jam: [None; 4] }
    }

    fn include(&mut self, f: &FailureSpec) {
        for i in 0..NUM_ACTUATORS {
            self.lb[i] = self.lb[i].max(f.lb_abs[i]);
            self.ub[i] = self.ub[i].min(f.ub_abs[i]).max(self.lb[i]);
        }
        for i in 0..4 {
            self.tilt_lb[i] = self.tilt_lb[i].max(f.tilt_lb[i]);
            self.tilt_ub[i] = self.tilt_ub[i].min(f.tilt_ub[i]).max(self.tilt_lb[i]);
        }
        if let Some((i, angle)) = f.tilt_jam {
            self.tilt_jam[i] = Some(angle);
        }
    }

    /// Tilt command after jams and travel limits.
    pub fn tilt_command(&self, i: usize, cmd: f64) -> f64 {
        self.tilt_jam[i].unwrap_or_else(|| cmd.clamp(self.tilt_lb[i], self.tilt_ub[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Latch {
    fired_at: Option<f64>,
    /// Signed yaw offset from the trigger angle at the previous check.
    last_yaw_offset: Option<f64>,
}

/// Watches the triggers of a set of failures and latches them.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureMonitor {
    specs: Vec<FailureSpec>,
    latches: Vec<Latch>,
}

impl FailureMonitor {
    pub fn new(specs: Vec<FailureSpec>) -> Self {
        let latches = vec![Latch { fired_at: None, last_yaw_offset: None }; specs.len()];
        Self { specs, latches }
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Checks every trigger at time `t`. Returns true if a failure fired now.
    pub fn update(&mut self, t: f64, state: &PlantState, p: &VehicleParams) -> bool {
        let mut fired = false;
        for (spec, latch) in self.specs.iter().zip(self.latches.iter_mut()) {
            if latch.fired_at.is_some() {
                continue;
            }
            let hit = match spec.trigger {
                Trigger::AtTime(t0) => t >= t0,
                Trigger::AtAirspeed(v) => state.airdata(&nalgebra::Vector3::zeros(), p).va >= v,
                Trigger::AtYaw(y) => {
                    // Fire when yaw passes through the trigger angle in either
                    // direction; a jump across ±π does not count.
                    let off = wrap_angle(state.attitude.z - y);
                    let crossed = latch
                        .last_yaw_offset
                        .is_some_and(|prev| prev.signum() != off.signum() && (off - prev).abs() < std::f64::consts::PI);
                    latch.last_yaw_offset = Some(off);
                    crossed || off == 0.0
                }
            };
            if hit {
                latch.fired_at = Some(t);
                fired = true;
            }
        }
        fired
    }

    /// Time of the first failure to fire.
    pub fn first_trigger_time(&self) -> Option<f64> {
        self.latches.iter().filter_map(|l| l.fired_at).reduce(f64::min)
    }

    /// Combined effect of the failures that have fired, or `None`.
    pub fn active(&self) -> Option<ActiveFailure> {
        let mut out = None;
        for (spec, latch) in self.specs.iter().zip(&self.latches) {
            if latch.fired_at.is_some() {
                out.get_or_insert_with(ActiveFailure::nominal).include(spec);
            }
        }
        out
    }
}

/// Effect of a single failure at time `t`, latching on its trigger.
pub fn apply_failure(
    monitor: &mut FailureMonitor,
    t: f64,
    state: &PlantState,
    p: &VehicleParams,
) -> Option<ActiveFailure> {
    monitor.update(t, state, p);
    monitor.active()
}
