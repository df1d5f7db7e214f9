//! Flight experiments and the scenario configuration file.
//!
//! A scenario file is TOML. `[scenario]` picks the velocity profile by
//! `kind`; the other sections are optional and fall back to defaults:
//!
//! ```toml
//! controller = "mpc"            # or "pid"
//! vehicle = "../vehicle.toml"   # relative to this file; built-in defaults if absent
//!
//! [scenario]
//! kind = "circle"
//! speed = 26.0
//! radius = 250.0
//!
//! [sim]
//! duration = 25.0
//!
//! [mpc.weights]
//! q_ref = [20.0, 10.0, 50.0]
//!
//! [[failure]]
//! kind = "motor_out"
//! index = 1
//! trigger = { at_yaw_deg = 90.0 }
//! ```

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::allocation::{FailureEntry, FailureKind, FailureSpec, TriggerEntry};
use crate::control::{AttitudeGains, BaselineConfig, MpcConfig};
use crate::model::{ActuatorCommand, PlantState, TiltCommand, VehicleParams};
use crate::sim::{ControllerKind, SimConfig};
use crate::ConfigError;

fn d_target() -> f64 {
    27.74
}
fn d_accel() -> f64 {
    2.0
}
fn d_hold() -> f64 {
    4.0
}
fn d_circle_speed() -> f64 {
    26.0
}
fn d_radius() -> f64 {
    250.0
}
fn d_index() -> usize {
    1
}
fn d_jam_angle() -> f64 {
    60.0
}
fn d_jam_airspeed() -> f64 {
    8.0
}
fn d_fail_yaw() -> f64 {
    90.0
}

/// Velocity profile of an experiment. Speeds in m/s, rates in m/s², angles in degrees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    #[default]
    Hover,
    /// [min(accel·t, target), 0, 0].
    Acceleration {
        #[serde(default = "d_target")]
        target_speed: f64,
        #[serde(default = "d_accel")]
        accel: f64,
    },
    /// Accelerate as above, hold, then ramp back to zero.
    AccelDecel {
        #[serde(default = "d_target")]
        target_speed: f64,
        #[serde(default = "d_accel")]
        accel: f64,
        #[serde(default = "d_hold")]
        hold: f64,
        #[serde(default = "d_accel")]
        decel: f64,
    },
    /// Straight acceleration to `speed`, then a constant-speed right turn of `radius` m.
    Circle {
        #[serde(default = "d_circle_speed")]
        speed: f64,
        #[serde(default = "d_accel")]
        accel: f64,
        #[serde(default = "d_radius")]
        radius: f64,
    },
    /// Acceleration with one servo jammed once the airspeed reaches `trigger_airspeed`.
    ServoJam {
        #[serde(default = "d_target")]
        target_speed: f64,
        #[serde(default = "d_accel")]
        accel: f64,
        #[serde(default = "d_index")]
        servo: usize,
        #[serde(default = "d_jam_angle")]
        angle_deg: f64,
        #[serde(default = "d_jam_airspeed")]
        trigger_airspeed: f64,
    },
    /// Circle with one motor stopping once the yaw reaches `trigger_yaw_deg`.
    MotorOut {
        #[serde(default = "d_circle_speed")]
        speed: f64,
        #[serde(default = "d_accel")]
        accel: f64,
        #[serde(default = "d_radius")]
        radius: f64,
        #[serde(default = "d_index")]
        motor: usize,
        #[serde(default = "d_fail_yaw")]
        trigger_yaw_deg: f64,
    },
    /// Piecewise-linear setpoint through `[t, vx, vy, vz]` points, held past the ends.
    Custom { waypoints: Vec<[f64; 4]> },
}

/// Straight ramp from rest at `accel` that stops at `target`.
fn ramp(t: f64, accel: f64, target: f64) -> f64 {
    (accel * t).min(target)
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Hover => "hover",
            ScenarioKind::Acceleration { .. } => "acceleration",
            ScenarioKind::AccelDecel { .. } => "accel_decel",
            ScenarioKind::Circle { .. } => "circle",
            ScenarioKind::ServoJam { .. } => "servo_jam",
            ScenarioKind::MotorOut { .. } => "motor_out",
            ScenarioKind::Custom { .. } => "custom",
        }
    }

    /// Run length used when the file gives none, s.
    pub fn default_duration(&self) -> f64 {
        match self {
            ScenarioKind::Hover => 10.0,
            ScenarioKind::Acceleration { .. } | ScenarioKind::Circle { .. } | ScenarioKind::ServoJam { .. } => 25.0,
            ScenarioKind::AccelDecel { target_speed, accel, hold, decel } => {
                target_speed / accel + hold + target_speed / decel + 5.0
            }
            // Long enough to turn past 90° of yaw and recover.
            ScenarioKind::MotorOut { speed, accel, radius, trigger_yaw_deg, .. } => {
                speed / accel + trigger_yaw_deg.to_radians() * radius / speed + 10.0
            }
            ScenarioKind::Custom { waypoints } => waypoints.last().map_or(10.0, |w| w[0]),
        }
    }

    /// Time the circular phase starts, for the circle experiments.
    pub fn circle_start(&self) -> Option<f64> {
        match self {
            ScenarioKind::Circle { speed, accel, .. } | ScenarioKind::MotorOut { speed, accel, .. } => {
                Some(speed / accel)
            }
            _ => None,
        }
    }

    pub fn circle_radius(&self) -> Option<f64> {
        match self {
            ScenarioKind::Circle { radius, .. } | ScenarioKind::MotorOut { radius, .. } => Some(*radius),
            _ => None,
        }
    }

    /// Cruise speed the profile settles on, if any.
    pub fn cruise_speed(&self) -> Option<f64> {
        match self {
            ScenarioKind::Acceleration { target_speed, .. } | ScenarioKind::ServoJam { target_speed, .. } => {
                Some(*target_speed)
            }
            ScenarioKind::AccelDecel { target_speed, .. } => Some(*target_speed),
            ScenarioKind::Circle { speed, .. } | ScenarioKind::MotorOut { speed, .. } => Some(*speed),
            _ => None,
        }
    }

    pub fn velocity_setpoint(&self, t: f64) -> Vector3<f64> {
        let t = t.max(0.0);
        match self {
            ScenarioKind::Hover => Vector3::zeros(),
            ScenarioKind::Acceleration { target_speed, accel } | ScenarioKind::ServoJam { target_speed, accel, .. } => {
                Vector3::new(ramp(t, *accel, *target_speed), 0.0, 0.0)
            }
            ScenarioKind::AccelDecel { target_speed, accel, hold, decel } => {
                let t_brake = target_speed / accel + hold;
                let v = if t < t_brake {
                    ramp(t, *accel, *target_speed)
                } else {
                    (target_speed - decel * (t - t_brake)).max(0.0)
                };
                Vector3::new(v, 0.0, 0.0)
            }
            ScenarioKind::Circle { speed, accel, radius } | ScenarioKind::MotorOut { speed, accel, radius, .. } => {
                let t_c = speed / accel;
                if t < t_c {
                    Vector3::new(accel * t, 0.0, 0.0)
                } else {
                    let theta = speed / radius * (t - t_c);
                    Vector3::new(speed * theta.cos(), speed * theta.sin(), 0.0)
                }
            }
            ScenarioKind::Custom { waypoints } => interpolate(waypoints, t),
        }
    }

    /// Failures the experiment itself implies.
    pub fn implied_failures(&self) -> Vec<FailureEntry> {
        match *self {
            ScenarioKind::ServoJam { servo, angle_deg, trigger_airspeed, .. } => vec![FailureEntry {
                kind: FailureKind::ServoJam,
                index: servo,
                value: Some(angle_deg),
                lower: None,
                upper: None,
                trigger: TriggerEntry::AtAirspeed(trigger_airspeed),
            }],
            ScenarioKind::MotorOut { motor, trigger_yaw_deg, .. } => vec![FailureEntry {
                kind: FailureKind::MotorOut,
                index: motor,
                value: None,
                lower: None,
                upper: None,
                trigger: TriggerEntry::AtYawDeg(trigger_yaw_deg),
            }],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("scenario {name} must be positive, got {v}"))
            }
        };
        match self {
            ScenarioKind::Hover => Ok(()),
            ScenarioKind::Acceleration { target_speed, accel } => {
                positive("target_speed", *target_speed)?;
                positive("accel", *accel)
            }
            ScenarioKind::AccelDecel { target_speed, accel, hold, decel } => {
                positive("target_speed", *target_speed)?;
                positive("accel", *accel)?;
                positive("decel", *decel)?;
                if *hold < 0.0 {
                    return Err("scenario hold must be non-negative".into());
                }
                Ok(())
            }
            ScenarioKind::Circle { speed, accel, radius } => {
                positive("speed", *speed)?;
                positive("accel", *accel)?;
                positive("radius", *radius)
            }
            ScenarioKind::ServoJam { target_speed, accel, .. } => {
                positive("target_speed", *target_speed)?;
                positive("accel", *accel)
            }
            ScenarioKind::MotorOut { speed, accel, radius, .. } => {
                positive("speed", *speed)?;
                positive("accel", *accel)?;
                positive("radius", *radius)
            }
            ScenarioKind::Custom { waypoints } => {
                if waypoints.is_empty() {
                    return Err("custom scenario needs at least one waypoint".into());
                }
                if waypoints.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err("custom waypoint times must increase".into());
                }
                if waypoints.iter().flatten().any(|v| !v.is_finite()) {
                    return Err("custom waypoints must be finite".into());
                }
                Ok(())
            }
        }
    }
}

fn interpolate(points: &[[f64; 4]], t: f64) -> Vector3<f64> {
    let at = |w: &[f64; 4]| Vector3::new(w[1], w[2], w[3]);
    match points {
        [] => Vector3::zeros(),
        [first, ..] if t <= first[0] => at(first),
        _ => {
            for w in points.windows(2) {
                if t <= w[1][0] {
                    let s = (t - w[0][0]) / (w[1][0] - w[0][0]);
                    return at(&w[0]) * (1.0 - s) + at(&w[1]) * s;
                }
            }
            at(points.last().unwrap())
        }
    }
}

/// Initial condition. The vehicle starts level-trimmed unless told otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub attitude_deg: [f64; 3],
    pub tilt_deg: [f64; 4],
}

impl Default for InitialState {
    fn default() -> Self {
        Self { position: [0.0; 3], velocity: [0.0; 3], attitude_deg: [0.0; 3], tilt_deg: [0.0; 4] }
    }
}

impl InitialState {
    pub fn to_plant(&self, p: &VehicleParams) -> PlantState {
        let tilt = self.tilt_deg.map(|d| p.clamp_tilt(d.to_radians()));
        PlantState {
            position: Vector3::from(self.position),
            velocity: Vector3::from(self.velocity),
            attitude: Vector3::from(self.attitude_deg.map(f64::to_radians)),
            body_rates: Vector3::zeros(),
            tilt,
            actuators: ActuatorCommand { tilt: TiltCommand::Target(tilt), ..ActuatorCommand::hover(p) },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttitudeSection {
    pub gains: Option<AttitudeGains>,
}

/// `[sim]` section; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration: Option<f64>,
    pub plant_hz: Option<u32>,
    pub attitude_hz: Option<u32>,
    pub velocity_hz: Option<u32>,
    pub seed: Option<u64>,
    pub fallback: Option<bool>,
}

/// The scenario file as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub controller: Option<ControllerKind>,
    /// Vehicle description file, relative to the scenario file.
    pub vehicle: Option<String>,
    pub scenario: ScenarioKind,
    pub initial: InitialState,
    pub sim: SimSection,
    pub mpc: MpcConfig,
    pub attitude: AttitudeSection,
    pub baseline: BaselineConfig,
    pub failure: Vec<FailureEntry>,
}

/// Everything needed to fly one experiment, resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    pub initial: InitialState,
    pub vehicle: VehicleParams,
    pub mpc: MpcConfig,
    pub attitude: AttitudeGains,
    pub baseline: BaselineConfig,
    /// Failures written in the file plus those the kind implies.
    pub failures: Vec<FailureSpec>,
}

impl ScenarioConfig {
    /// Default configuration for `kind` on the default vehicle.
    pub fn from_kind(kind: ScenarioKind) -> Result<Self, ConfigError> {
        let file = ScenarioFile { scenario: kind, ..ScenarioFile::default() };
        Ok(Self::resolve(file, VehicleParams::default())?.0)
    }

    pub fn velocity_setpoint(&self, t: f64) -> Vector3<f64> {
        self.kind.velocity_setpoint(t)
    }

    pub fn initial_plant_state(&self) -> PlantState {
        self.initial.to_plant(&self.vehicle)
    }

    /// Simulation settings for this scenario with the given controller and
    /// the defaults for everything else.
    pub fn sim_config(&self, controller: ControllerKind) -> SimConfig {
        SimConfig { duration: self.kind.default_duration(), controller, ..SimConfig::default() }
    }

    /// Parses a scenario file. Relative vehicle paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<(Self, SimConfig), ConfigError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| locate_scenario_error(text, e))?;
        let vehicle = match &file.vehicle {
            Some(rel) => {
                let path = base_dir.map_or_else(|| Path::new(rel).to_path_buf(), |b| b.join(rel));
                VehicleParams::load(&path)?
            }
            None => VehicleParams::default(),
        };
        Self::resolve(file, vehicle)
    }

    pub fn load(path: &Path) -> Result<(Self, SimConfig), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, path.parent())
    }

    fn resolve(file: ScenarioFile, vehicle: VehicleParams) -> Result<(Self, SimConfig), ConfigError> {
        let invalid = ConfigError::Invalid;
        file.scenario.validate().map_err(invalid)?;
        file.mpc.weights.validate().map_err(invalid)?;
        file.baseline.validate().map_err(invalid)?;
        if file.mpc.horizon == 0 || !(file.mpc.dt > 0.0) {
            return Err(invalid("mpc horizon must be at least 1 and dt positive".into()));
        }
        let attitude = file.attitude.gains.unwrap_or_else(|| AttitudeGains::for_vehicle(&vehicle));
        attitude.validate().map_err(invalid)?;
        let failures = file
            .failure
            .iter()
            .chain(file.scenario.implied_failures().iter())
            .map(|e| e.to_spec(&vehicle))
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;

        let defaults = SimConfig::default();
        let s = &file.sim;
        let sim = SimConfig {
            plant_hz: s.plant_hz.unwrap_or(defaults.plant_hz),
            attitude_hz: s.attitude_hz.unwrap_or(defaults.attitude_hz),
            velocity_hz: s.velocity_hz.unwrap_or(defaults.velocity_hz),
            duration: s.duration.unwrap_or_else(|| file.scenario.default_duration()),
            seed: s.seed.unwrap_or(defaults.seed),
            controller: file.controller.unwrap_or(defaults.controller),
            fallback: s.fallback.unwrap_or(defaults.fallback),
        };
        sim.validate().map_err(invalid)?;
        let cfg = ScenarioConfig {
            name: file.name.unwrap_or_else(|| file.scenario.name().to_string()),
            kind: file.scenario,
            initial: file.initial,
            vehicle,
            mpc: file.mpc,
            attitude,
            baseline: file.baseline,
            failures,
        };
        Ok((cfg, sim))
    }
}

/// The `[scenario]` table is tagged by `kind`, so serde buffers it and a bad
/// value gets reported at the table header. Retry the keys one at a time to
/// find the offending line.
fn locate_scenario_error(text: &str, err: toml::de::Error) -> ConfigError {
    #[derive(Deserialize)]
    struct Spans {
        scenario: BTreeMap<String, toml::Spanned<toml::Value>>,
    }
    let at_header = err.span().is_some_and(|r| text[r].starts_with("[scenario"));
    let Ok(spans) = toml::from_str::<Spans>(text).map(|s| s.scenario) else { return err.into() };
    if !at_header {
        return err.into();
    }
    let kind = spans.get("kind").map(|v| v.get_ref().clone());
    for (key, value) in spans.iter().filter(|(k, _)| *k != "kind") {
        let mut t = toml::Table::new();
        if let Some(kind) = &kind {
            t.insert("kind".into(), kind.clone());
        }
        t.insert(key.clone(), value.get_ref().clone());
        match ScenarioKind::deserialize(toml::Value::Table(t)) {
            Err(e) if !e.message().starts_with("missing field") => {
                let line = text[..value.span().start].lines().count().max(1);
                return ConfigError::Field { line, key: format!("scenario.{key}"), message: e.message().to_string() };
            }
            _ => {}
        }
    }
    err.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn accel() -> ScenarioKind {
        ScenarioKind::Acceleration { target_speed: 27.74, accel: 2.0 }
    }

    #[test]
    fn acceleration_profile() {
        assert_eq!(accel().velocity_setpoint(5.0), Vector3::new(10.0, 0.0, 0.0));
        assert_eq!(accel().velocity_setpoint(20.0), Vector3::new(27.74, 0.0, 0.0));
    }

    #[test]
    fn circle_enters_along_x() {
        let k = ScenarioKind::Circle { speed: 26.0, accel: 2.0, radius: 250.0 };
        assert_relative_eq!(k.velocity_setpoint(13.0), Vector3::new(26.0, 0.0, 0.0), epsilon = 1e-12);
        let quarter = 13.0 + std::f64::consts::FRAC_PI_2 * 250.0 / 26.0;
        assert_relative_eq!(k.velocity_setpoint(quarter), Vector3::new(0.0, 26.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn accel_decel_returns_to_rest() {
        let k = ScenarioKind::AccelDecel { target_speed: 27.74, accel: 2.0, hold: 4.0, decel: 2.0 };
        assert_relative_eq!(k.velocity_setpoint(15.0).x, 27.74);
        assert_relative_eq!(k.velocity_setpoint(17.87 + 2.0).x, 23.74, epsilon = 1e-9);
        assert_eq!(k.velocity_setpoint(40.0).x, 0.0);
    }

    #[test]
    fn custom_waypoints_interpolate() {
        let k = ScenarioKind::Custom { waypoints: vec![[0.0, 0.0, 0.0, 0.0], [2.0, 4.0, -2.0, 1.0]] };
        assert_eq!(k.velocity_setpoint(1.0), Vector3::new(2.0, -1.0, 0.5));
        assert_eq!(k.velocity_setpoint(5.0), Vector3::new(4.0, -2.0, 1.0));
    }

    #[test]
    fn file_round_trip_with_failure() {
        let text = r#"
            controller = "pid"
            [scenario]
            kind = "motor_out"
            radius = 150.0
            [sim]
            duration = 12.5
            [mpc.weights]
            q_ref = [1.0, 2.0, 3.0]
            [[failure]]
            kind = "surface_limit"
            index = 4
            value = 0.2
            trigger = { at_time = 3.0 }
        "#;
        let (cfg, sim) = ScenarioConfig::from_toml_str(text, None).unwrap();
        assert_eq!(sim.controller, ControllerKind::BaselinePid);
        assert_eq!(sim.duration, 12.5);
        assert_eq!(cfg.kind.circle_radius(), Some(150.0));
        assert_eq!(cfg.mpc.weights.q_ref, [1.0, 2.0, 3.0]);
        assert_eq!(cfg.mpc.weights.q_f, MpcConfig::default().weights.q_f);
        // The file's failure plus the implied motor failure.
        assert_eq!(cfg.failures.len(), 2);
        assert_eq!(cfg.failures[1].ub_abs[0], 0.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "[scenario]\nkind = \"circle\"\nradius = \"big\"\n";
        let err = ScenarioConfig::from_toml_str(text, None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "[scenario]\nkind = \"acceleration\"\n\n[sim]\nspeed = 3\n";
        let err = ScenarioConfig::from_toml_str(text, None).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = "[scenario]\nkind = \"circle\"\nradius = -5.0\n";
        assert!(ScenarioConfig::from_toml_str(text, None).is_err());
        let text = "[scenario]\nkind = \"hover\"\n[sim]\nattitude_hz = 500\n";
        assert!(ScenarioConfig::from_toml_str(text, None).is_err());
    }
}
