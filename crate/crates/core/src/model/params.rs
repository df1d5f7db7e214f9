use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::ConfigError;

/// Aerodynamic constants of the airframe.
///
/// The drag and lift polynomials take the angle of attack in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroParams {
    /// Air density, kg/m³.
    pub rho: f64,
    /// Wing reference area, m².
    pub wing_area: f64,
    pub aileron_area: f64,
    pub elevator_area: f64,
    pub rudder_area: f64,
    /// Wingspan, m.
    pub span: f64,
    /// Mean aerodynamic chord, m.
    pub mean_chord: f64,
    pub cd0: f64,
    pub cd_alpha: f64,
    pub cz0: f64,
    pub cz_alpha: f64,
    /// Aileron, elevator and rudder effectiveness.
    pub roll_effectiveness: f64,
    pub pitch_effectiveness: f64,
    pub yaw_effectiveness: f64,
    /// Airspeed below which aerodynamics are ignored, m/s.
    pub eff_lo: f64,
    /// Airspeed above which aerodynamics act in full, m/s.
    pub eff_hi: f64,
    /// Validity range of the polar; |α| is clamped to this before evaluation.
    pub alpha_limit_deg: f64,
}

impl Default for AeroParams {
    fn default() -> Self {
        Self {
            rho: 1.225,
            wing_area: 0.44,
            aileron_area: 0.036,
            elevator_area: 0.1364,
            rudder_area: 0.004,
            span: 2.0,
            mean_chord: 0.22,
            cd0: 0.35,
            cd_alpha: 0.11,
            cz0: 0.03,
            cz_alpha: 0.2,
            roll_effectiveness: 0.1173,
            pitch_effectiveness: 0.556,
            yaw_effectiveness: 0.0881,
            eff_lo: 5.0,
            eff_hi: 15.0,
            alpha_limit_deg: 10.0,
        }
    }
}

/// Physical description of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia_diag: Vector3<f64>,
    /// Thrust at full normalized rotor speed, N.
    pub c_f: f64,
    /// Reaction torque at full normalized rotor speed, N·m.
    pub c_k: f64,
    /// Body-frame rotor hub offsets from the centre of gravity, m.
    pub rotor_pos: [Vector3<f64>; 4],
    /// Spin direction flag d_i; reaction torque sign is (-1)^d_i.
    pub spin_dir: [u8; 4],
    /// Servo travel [min, max], rad.
    pub tilt_range: [f64; 2],
    pub tilt_rate_max: f64,
    /// Per-rotor thrust box used by the velocity controllers, N.
    pub thrust_per_rotor_max: f64,
    /// Servo tracking time constant, s.
    pub servo_time_constant: f64,
    /// Rotor spin-up time constant, s. Zero means instantaneous.
    pub motor_time_constant: f64,
    pub gravity: f64,
    pub aero: AeroParams,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let (ax, ay) = (0.35, 0.40);
        let c_f = 27.36;
        Self {
            mass: 7.427,
            inertia_diag: Vector3::new(10.685, 5.7465, 4.6678),
            c_f,
            c_k: 0.016 * c_f,
            // 1 front-right, 2 rear-left, 3 front-left, 4 rear-right.
            rotor_pos: [
                Vector3::new(ax, ay, 0.0),
                Vector3::new(-ax, -ay, 0.0),
                Vector3::new(ax, -ay, 0.0),
                Vector3::new(-ax, ay, 0.0),
            ],
            spin_dir: [0, 0, 1, 1],
            tilt_range: [-7.0_f64.to_radians(), 95.0_f64.to_radians()],
            tilt_rate_max: PI / 4.0,
            thrust_per_rotor_max: 23.0,
            servo_time_constant: 0.05,
            motor_time_constant: 0.0,
            gravity: 9.81,
            aero: AeroParams::default(),
        }
    }
}

impl VehicleParams {
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.inertia_diag)
    }

    pub fn spin_sign(&self, i: usize) -> f64 {
        if self.spin_dir[i].is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Collective thrust box of the velocity controllers, N.
    pub fn collective_thrust_max(&self) -> f64 {
        4.0 * self.thrust_per_rotor_max
    }

    /// Equal rotor speed that balances weight with all rotors vertical.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.weight() / (4.0 * self.c_f)).sqrt()
    }

    pub fn clamp_tilt(&self, chi: f64) -> f64 {
        chi.clamp(self.tilt_range[0], self.tilt_range[1])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.inertia_diag.iter().any(|&v| !(v > 0.0)) {
            return bad("inertia diagonal entries must be positive");
        }
        if !(self.c_f > 0.0) || !(self.c_k >= 0.0) {
            return bad("rotor coefficients must be non-negative (c_f > 0)");
        }
        let spin_sum: f64 = (0..4).map(|i| self.spin_sign(i)).sum();
        if spin_sum != 0.0 {
            return bad("rotor spin directions must be two CW and two CCW");
        }
        if !(self.tilt_range[0] < self.tilt_range[1]) {
            return bad("tilt range must satisfy min < max");
        }
        if !(self.tilt_rate_max > 0.0) || !(self.thrust_per_rotor_max > 0.0) {
            return bad("tilt rate and thrust limits must be positive");
        }
        if !(self.servo_time_constant > 0.0) || self.motor_time_constant < 0.0 {
            return bad("servo time constant must be positive, motor time constant non-negative");
        }
        let a = &self.aero;
        if !(a.eff_lo >= 0.0 && a.eff_lo < a.eff_hi) {
            return bad("aero effectiveness breakpoints must satisfy 0 <= eff_lo < eff_hi");
        }
        if !(a.rho > 0.0) || !(a.alpha_limit_deg > 0.0) {
            return bad("air density and alpha limit must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: VehicleFile = toml::from_str(text)?;
        let params = Self::from(file);
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&VehicleFile::from(self)).expect("vehicle file serializes")
    }
}

/// On-disk layout of the vehicle description.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleFile {
    pub vehicle: VehicleSection,
    pub aero: AeroParams,
    pub limits: LimitsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub c_f: f64,
    pub c_k: f64,
    pub rotor_positions: [[f64; 3]; 4],
    pub spin_directions: [u8; 4],
    pub gravity: f64,
    pub servo_time_constant: f64,
    pub motor_time_constant: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        VehicleFile::from(&VehicleParams::default()).vehicle
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub tilt_min_deg: f64,
    pub tilt_max_deg: f64,
    pub tilt_rate_max: f64,
    pub thrust_per_rotor_max: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        VehicleFile::from(&VehicleParams::default()).limits
    }
}

impl From<&VehicleParams> for VehicleFile {
    fn from(p: &VehicleParams) -> Self {
        Self {
            vehicle: VehicleSection {
                mass: p.mass,
                inertia: p.inertia_diag.into(),
                c_f: p.c_f,
                c_k: p.c_k,
                rotor_positions: p.rotor_pos.map(|r| r.into()),
                spin_directions: p.spin_dir,
                gravity: p.gravity,
                servo_time_constant: p.servo_time_constant,
                motor_time_constant: p.motor_time_constant,
            },
            aero: p.aero.clone(),
            limits: LimitsSection {
                tilt_min_deg: p.tilt_range[0].to_degrees(),
                tilt_max_deg: p.tilt_range[1].to_degrees(),
                tilt_rate_max: p.tilt_rate_max,
                thrust_per_rotor_max: p.thrust_per_rotor_max,
            },
        }
    }
}

impl From<VehicleFile> for VehicleParams {
    fn from(f: VehicleFile) -> Self {
        let v = f.vehicle;
        Self {
            mass: v.mass,
            inertia_diag: Vector3::from(v.inertia),
            c_f: v.c_f,
            c_k: v.c_k,
            rotor_pos: v.rotor_positions.map(Vector3::from),
            spin_dir: v.spin_directions,
            tilt_range: [f.limits.tilt_min_deg.to_radians(), f.limits.tilt_max_deg.to_radians()],
            tilt_rate_max: f.limits.tilt_rate_max,
            thrust_per_rotor_max: f.limits.thrust_per_rotor_max,
            servo_time_constant: v.servo_time_constant,
            motor_time_constant: v.motor_time_constant,
            gravity: v.gravity,
            aero: f.aero,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_symmetric() {
        let p = VehicleParams::default();
        p.validate().unwrap();
        let spin: f64 = (0..4).map(|i| p.spin_sign(i)).sum();
        assert_eq!(spin, 0.0);
        // Mirror about the body x-z plane.
        for r in &p.rotor_pos {
            assert!(p.rotor_pos.iter().any(|q| q.x == r.x && q.y == -r.y && q.z == r.z));
        }
        assert!((p.tilt_range[0].to_degrees() + 7.0).abs() < 1e-12);
        assert!((p.tilt_range[1].to_degrees() - 95.0).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip_preserves_params() {
        let p = VehicleParams::default();
        let text = p.to_toml_string();
        let q = VehicleParams::from_toml_str(&text).unwrap();
        assert_eq!(p.aero, q.aero);
        assert_eq!(p.rotor_pos, q.rotor_pos);
        assert!((p.tilt_range[1] - q.tilt_range[1]).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mass_and_unknown_keys() {
        let err = VehicleParams::from_toml_str("[vehicle]\nmass = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("mass"));
        let err = VehicleParams::from_toml_str("[aero]\nbogus = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn hover_speed_balances_weight() {
        let p = VehicleParams::default();
        let w = p.hover_rotor_speed();
        assert!((4.0 * p.c_f * w * w - p.mass * p.gravity).abs() < 1e-12);
        assert!((w - 0.8160).abs() < 1e-3);
    }
}
