use nalgebra::Vector3;

use super::{frames, ModelError, VehicleParams, Wrench};

/// Thrust and moment produced by the four rotors, including reaction torque.
/// Induced rotor drag is neglected.
pub fn rotor_wrench(omega: &[f64; 4], tilt: &[f64; 4], p: &VehicleParams) -> Result<Wrench, ModelError> {
    if omega.iter().chain(tilt.iter()).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("rotor command"));
    }
    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();
    for i in 0..4 {
        let n = frames::tilt_direction(tilt[i]);
        let w2 = omega[i] * omega[i];
        let thrust = p.c_f * w2 * n;
        force += thrust;
        moment += p.rotor_pos[i].cross(&thrust) + p.spin_sign(i) * p.c_k * w2 * n;
    }
    Ok(Wrench { force, moment })
}

/// Gravity expressed in the body frame; produces no moment about the CG.
pub fn gravity_wrench(att: &Vector3<f64>, p: &VehicleParams) -> Wrench {
    let r = frames::body_to_inertial(att);
    Wrench { force: r.transpose() * Vector3::new(0.0, 0.0, p.mass * p.gravity), moment: Vector3::zeros() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn idle_rotors_produce_nothing() {
        let w = rotor_wrench(&[0.0; 4], &[0.3; 4], &VehicleParams::default()).unwrap();
        assert_eq!(w, Wrench::zero());
    }

    #[test]
    fn single_rotor_full_throttle_forward() {
        let p = VehicleParams::default();
        let w = rotor_wrench(&[1.0, 0.0, 0.0, 0.0], &[FRAC_PI_2, 0.0, 0.0, 0.0], &p).unwrap();
        assert_relative_eq!(w.force, Vector3::new(27.36, 0.0, 0.0), epsilon = 1e-12);
        let expected = p.rotor_pos[0].cross(&w.force) + p.c_k * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(w.moment, expected, epsilon = 1e-12);
    }

    #[test]
    fn hover_balances_weight_without_moment() {
        let p = VehicleParams::default();
        let w0 = p.hover_rotor_speed();
        let w = rotor_wrench(&[w0; 4], &[0.0; 4], &p).unwrap();
        assert_relative_eq!(w.force, Vector3::new(0.0, 0.0, -p.weight()), epsilon = 1e-9);
        assert!(w.moment.norm() < 1e-12);
        // The rounded trim value lands within 0.02 N.
        let w = rotor_wrench(&[0.8160; 4], &[0.0; 4], &p).unwrap();
        assert!((w.force.z + 72.86).abs() < 0.02);
    }

    #[test]
    fn rejects_nan() {
        let p = VehicleParams::default();
        assert!(rotor_wrench(&[f64::NAN, 0.0, 0.0, 0.0], &[0.0; 4], &p).is_err());
    }

    #[test]
    fn gravity_examples() {
        let p = VehicleParams::default();
        let mg = p.mass * p.gravity;
        let level = gravity_wrench(&Vector3::zeros(), &p);
        assert_relative_eq!(level.force, Vector3::new(0.0, 0.0, mg), epsilon = 1e-12);
        assert_relative_eq!(mg, 72.86, epsilon = 1e-2);
        // Nose straight up: gravity pulls toward the tail.
        let up = gravity_wrench(&Vector3::new(0.0, FRAC_PI_2, 0.0), &p);
        assert_relative_eq!(up.force, Vector3::new(-mg, 0.0, 0.0), epsilon = 1e-9);
        let down = gravity_wrench(&Vector3::new(0.0, -FRAC_PI_2, 0.0), &p);
        assert_relative_eq!(down.force, Vector3::new(mg, 0.0, 0.0), epsilon = 1e-9);
        let inverted = gravity_wrench(&Vector3::new(std::f64::consts::PI, 0.0, 0.0), &p);
        assert_relative_eq!(inverted.force, Vector3::new(0.0, 0.0, -mg), epsilon = 1e-9);
        assert_eq!(inverted.moment, Vector3::zeros());
    }

    proptest! {
        #[test]
        fn rotor_force_stays_in_xz_plane(
            omega in prop::array::uniform4(0.0f64..1.0),
            tilt in prop::array::uniform4(-0.12f64..1.65),
        ) {
            let w = rotor_wrench(&omega, &tilt, &VehicleParams::default()).unwrap();
            prop_assert_eq!(w.force.y, 0.0);
        }
    }
}
