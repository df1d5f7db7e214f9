//! Frame conventions: NED inertial frame, FRD body frame, Z-Y-X Euler angles
//! (roll, pitch, yaw). Positive pitch is nose up.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::{PI, TAU};

/// Rotation taking body-frame vectors to the inertial frame.
pub fn body_to_inertial(att: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let (sy, cy) = att.z.sin_cos();
    Matrix3::new(
        cp * cy,
        sr * sp * cy - cr * sy,
        cr * sp * cy + sr * sy,
        cp * sy,
        sr * sp * sy + cr * cy,
        cr * sp * sy - sr * cy,
        -sp,
        sr * cp,
        cr * cp,
    )
}

/// Maps body rates to Euler angle rates.
pub fn euler_kinematics(att: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = att.x.sin_cos();
    let (sp, cp) = att.y.sin_cos();
    let tp = sp / cp;
    Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp)
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w += TAU;
    }
    w
}

/// Direction of a rotor's thrust in the body frame for tilt `chi`.
#[inline]
pub fn tilt_direction(chi: f64) -> Vector3<f64> {
    let (s, c) = chi.sin_cos();
    Vector3::new(s, 0.0, -c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rotation_is_orthonormal() {
        let r = body_to_inertial(&Vector3::new(0.3, -0.7, 2.1));
        assert_relative_eq!(r * r.transpose(), Matrix3::identity(), epsilon = 1e-14);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn nose_up_pitch_raises_body_x() {
        let r = body_to_inertial(&Vector3::new(0.0, 0.5, 0.0));
        // NED: "up" is negative z.
        assert!((r * Vector3::x()).z < 0.0);
    }

    #[test]
    fn kinematics_identity_at_level() {
        assert_relative_eq!(euler_kinematics(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn wrap_range() {
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.25), 0.25);
    }
}
