use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{frames, AeroParams, Wrench};

/// Air-relative flight condition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AirData {
    /// Airspeed, m/s.
    pub va: f64,
    /// Angle of attack, rad.
    pub alpha: f64,
    /// Sideslip, rad.
    pub beta: f64,
    /// Dynamic pressure, Pa.
    pub q_bar: f64,
}

/// Control-surface deflections, normalized to [-1, 1].
///
/// Both aileron deflections are positive for positive (right-wing-down) roll.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Surfaces {
    pub aileron_left: f64,
    pub aileron_right: f64,
    pub elevator: f64,
    pub rudder: f64,
}

impl Surfaces {
    pub fn from_array(s: [f64; 4]) -> Self {
        Self { aileron_left: s[0], aileron_right: s[1], elevator: s[2], rudder: s[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.aileron_left, self.aileron_right, self.elevator, self.rudder]
    }

    /// Effective roll deflection of the aileron pair.
    pub fn aileron(&self) -> f64 {
        0.5 * (self.aileron_left + self.aileron_right)
    }
}

/// Airdata from a body-frame air-relative velocity.
pub fn airdata_from_body_velocity(v_body: &Vector3<f64>, rho: f64) -> AirData {
    let va = v_body.norm();
    let alpha = if v_body.x == 0.0 && v_body.z == 0.0 { 0.0 } else { v_body.z.atan2(v_body.x) };
    let beta = if va < 1e-6 { 0.0 } else { (v_body.y / va).clamp(-1.0, 1.0).asin() };
    AirData { va, alpha, beta, q_bar: 0.5 * rho * va * va }
}

/// Airdata for a vehicle with inertial velocity `v_inertial` and attitude `att`
/// flying through `wind` (inertial).
pub fn airdata(v_inertial: &Vector3<f64>, att: &Vector3<f64>, wind: &Vector3<f64>, rho: f64) -> AirData {
    let r = frames::body_to_inertial(att);
    airdata_from_body_velocity(&(r.transpose() * (v_inertial - wind)), rho)
}

/// Smoothstep gate on aerodynamic effectiveness, 0 below `eff_lo`, 1 above `eff_hi`.
pub fn aero_effectiveness(va: f64, p: &AeroParams) -> f64 {
    if va <= p.eff_lo {
        return 0.0;
    }
    if va >= p.eff_hi {
        return 1.0;
    }
    let s = (va - p.eff_lo) / (p.eff_hi - p.eff_lo);
    s * s * (3.0 - 2.0 * s)
}

/// Drag and lift magnitudes (X, Z) in the wind frame, before the effectiveness gate.
pub fn wind_axis_forces(ad: &AirData, p: &AeroParams) -> (f64, f64) {
    let a = ad.alpha.to_degrees().clamp(-p.alpha_limit_deg, p.alpha_limit_deg);
    let a2 = a * a;
    let qs = ad.q_bar * p.wing_area;
    (qs * (p.cd0 + p.cd_alpha * a2), qs * (p.cz0 + p.cz_alpha * a2))
}

/// Aerodynamic force in the body frame, scaled by the effectiveness gate.
pub fn aero_force(ad: &AirData, p: &AeroParams) -> Vector3<f64> {
    let e = aero_effectiveness(ad.va, p);
    if e == 0.0 {
        return Vector3::zeros();
    }
    let (drag, lift) = wind_axis_forces(ad, p);
    let (sa, ca) = ad.alpha.sin_cos();
    let (sb, cb) = ad.beta.sin_cos();
    // Wind-to-body rotation applied to [-drag, 0, -lift].
    e * Vector3::new(-drag * ca * cb + lift * sa, -drag * sb, -drag * sa * cb - lift * ca)
}

/// Surface moments in the body frame, scaled by the effectiveness gate.
pub fn surface_moment(ad: &AirData, s: &Surfaces, p: &AeroParams) -> Vector3<f64> {
    let e = aero_effectiveness(ad.va, p);
    let q = e * ad.q_bar;
    Vector3::new(
        q * p.aileron_area * p.span * p.roll_effectiveness * s.aileron(),
        q * p.elevator_area * p.mean_chord * p.pitch_effectiveness * s.elevator,
        q * p.rudder_area * p.span * p.yaw_effectiveness * s.rudder,
    )
}

/// Full aerodynamic wrench (force and surface moments), gated by effectiveness.
pub fn aero_wrench(ad: &AirData, s: &Surfaces, p: &AeroParams) -> Wrench {
    Wrench { force: aero_force(ad, p), moment: surface_moment(ad, s, p) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn full_gate() -> AeroParams {
        AeroParams { eff_lo: 0.0, eff_hi: 1e-3, ..AeroParams::default() }
    }

    #[test]
    fn airdata_cruise() {
        let ad = airdata_from_body_velocity(&Vector3::new(26.0, 0.0, 0.0), 1.225);
        assert_relative_eq!(ad.va, 26.0);
        assert_eq!(ad.alpha, 0.0);
        assert_eq!(ad.beta, 0.0);
        assert_relative_eq!(ad.q_bar, 414.05, epsilon = 1e-9);
    }

    #[test]
    fn airdata_at_rest() {
        let ad = airdata_from_body_velocity(&Vector3::zeros(), 1.225);
        assert_eq!((ad.va, ad.alpha, ad.beta, ad.q_bar), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn airdata_angle_of_attack() {
        let ad = airdata_from_body_velocity(&Vector3::new(10.0, 0.0, 1.0), 1.225);
        assert_relative_eq!(ad.alpha.to_degrees(), 5.710_593_137_499_643, epsilon = 1e-9);
    }

    #[test]
    fn airdata_wind_is_subtracted() {
        let wind = Vector3::new(5.0, 0.0, 0.0);
        let ad = airdata(&Vector3::new(5.0, 0.0, 0.0), &Vector3::zeros(), &wind, 1.225);
        assert_eq!(ad.va, 0.0);
    }

    #[test]
    fn effectiveness_breakpoints() {
        let p = AeroParams::default();
        assert_eq!(aero_effectiveness(0.0, &p), 0.0);
        assert_eq!(aero_effectiveness(30.0, &p), 1.0);
        assert_relative_eq!(aero_effectiveness(10.0, &p), 0.5);
        assert_eq!(aero_effectiveness(p.eff_lo, &p), 0.0);
        assert_eq!(aero_effectiveness(p.eff_hi, &p), 1.0);
    }

    #[test]
    fn zero_airspeed_gives_zero_wrench() {
        let w = aero_wrench(&AirData::default(), &Surfaces::from_array([1.0, 1.0, 1.0, 1.0]), &AeroParams::default());
        assert_eq!(w, Wrench::zero());
    }

    #[test]
    fn cruise_lift_supports_weight() {
        let p = AeroParams::default();
        let weight = 7.427 * 9.81;
        let q_bar = 0.5 * p.rho * 26.0 * 26.0;
        // Oracle: solve cz0 + cz_alpha·α² = W / (q̄ S) for α in degrees.
        let cz = weight / (q_bar * p.wing_area);
        let alpha_deg = ((cz - p.cz0) / p.cz_alpha).sqrt();
        assert!((alpha_deg - 1.36).abs() < 0.01);
        let ad = AirData { va: 26.0, alpha: alpha_deg.to_radians(), beta: 0.0, q_bar };
        let (_, lift) = wind_axis_forces(&ad, &p);
        assert_relative_eq!(lift, 72.86, epsilon = 0.01);
    }

    #[test]
    fn roll_moment_from_full_aileron() {
        let p = full_gate();
        let ad = AirData { va: 26.0, alpha: 0.0, beta: 0.0, q_bar: 414.05 };
        let m = surface_moment(&ad, &Surfaces::from_array([1.0, 1.0, 0.0, 0.0]), &p);
        assert_relative_eq!(m.x, 414.05 * 0.036 * 2.0 * 0.1173, epsilon = 1e-12);
        assert_relative_eq!(m.x, 3.497, epsilon = 5e-4);
        assert_eq!((m.y, m.z), (0.0, 0.0));
    }

    #[test]
    fn elevator_and_rudder_use_their_own_deflection() {
        let p = full_gate();
        let ad = AirData { va: 20.0, alpha: 0.0, beta: 0.0, q_bar: 245.0 };
        let m = surface_moment(&ad, &Surfaces::from_array([0.0, 0.0, 0.5, -1.0]), &p);
        assert_eq!(m.x, 0.0);
        assert_relative_eq!(m.y, 245.0 * 0.1364 * 0.22 * 0.556 * 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.z, -245.0 * 0.004 * 2.0 * 0.0881, epsilon = 1e-12);
    }

    #[test]
    fn drag_opposes_motion_and_lift_points_up() {
        let p = full_gate();
        let ad = airdata_from_body_velocity(&Vector3::new(20.0, 0.0, 0.0), p.rho);
        let f = aero_force(&ad, &p);
        assert!(f.x < 0.0);
        assert!(f.z < 0.0);
        assert_eq!(f.y, 0.0);
    }

    #[test]
    fn sideslip_mirror_keeps_drag_and_lift() {
        let p = full_gate();
        let a = airdata_from_body_velocity(&Vector3::new(20.0, 3.0, 1.0), p.rho);
        let b = airdata_from_body_velocity(&Vector3::new(20.0, -3.0, 1.0), p.rho);
        assert_relative_eq!(a.beta, -b.beta);
        let (fa, fb) = (aero_force(&a, &p), aero_force(&b, &p));
        assert_relative_eq!(fa.x, fb.x, epsilon = 1e-12);
        assert_relative_eq!(fa.y, -fb.y, epsilon = 1e-12);
        assert_relative_eq!(fa.z, fb.z, epsilon = 1e-12);
    }
}
