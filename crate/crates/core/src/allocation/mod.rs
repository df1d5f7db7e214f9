//! Incremental control allocation: maps a wrench setpoint onto the four rotor
//! speeds and four control surfaces by box-constrained least squares around
//! the previous actuator setpoint. Tilt angles bypass allocation and go
//! straight to the servos.

pub mod failure;

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::aero::{surface_moment, Surfaces};
use crate::model::frames::tilt_direction;
use crate::model::{rotor_wrench, ModelError, PlantState, VehicleParams, Wrench};
use crate::optim::{solve_bounded_lsq, BoundedLsqProblem, QpError};

pub use failure::{
    apply_failure, ActiveFailure, FailureEntry, FailureKind, FailureMonitor, FailureSpec, Trigger, TriggerEntry,
};

/// Rotor speeds then aileron left/right, elevator, rudder.
pub const NUM_ACTUATORS: usize = 8;

pub type Effectiveness = SMatrix<f64, 6, NUM_ACTUATORS>;

/// Residual force and moment norms above which the allocation counts as saturated.
pub const SATURATION_FORCE: f64 = 0.5;
pub const SATURATION_MOMENT: f64 = 0.1;

/// Default absolute bounds: rotors in [0, 1], surfaces in [-1, 1].
pub fn nominal_bounds() -> ([f64; NUM_ACTUATORS], [f64; NUM_ACTUATORS]) {
    ([0.0, 0.0, 0.0, 0.0, -1.0, -1.0, -1.0, -1.0], [1.0; NUM_ACTUATORS])
}

fn split(u: &[f64; NUM_ACTUATORS]) -> ([f64; 4], [f64; 4]) {
    ([u[0], u[1], u[2], u[3]], [u[4], u[5], u[6], u[7]])
}

/// Wrench produced by the allocated actuators at the current tilt and airspeed:
/// rotor thrust and torque plus surface moments. Gravity and the airframe's
/// own lift and drag do not depend on the actuators and are left out.
pub fn actuator_wrench(state: &PlantState, u: &[f64; NUM_ACTUATORS], p: &VehicleParams) -> Result<Wrench, ModelError> {
    let (omega, surf) = split(u);
    let rotor = rotor_wrench(&omega, &state.tilt, p)?;
    let ad = state.airdata(&Vector3::zeros(), p);
    let moment = surface_moment(&ad, &Surfaces::from_array(surf), &p.aero);
    Ok(Wrench::new(rotor.force, rotor.moment + moment))
}

/// Jacobian of [`actuator_wrench`] with respect to the actuators, with tilt
/// held at its current value.
pub fn effectiveness_matrix(state: &PlantState, u_trim: &[f64; NUM_ACTUATORS], p: &VehicleParams) -> Effectiveness {
    let mut a = Effectiveness::zeros();
    for i in 0..4 {
        let n = tilt_direction(state.tilt[i]);
        let k = 2.0 * u_trim[i];
        let force = k * p.c_f * n;
        let moment = p.rotor_pos[i].cross(&force) + p.spin_sign(i) * k * p.c_k * n;
        a.fixed_view_mut::<3, 1>(0, i).copy_from(&force);
        a.fixed_view_mut::<3, 1>(3, i).copy_from(&moment);
    }
    // Surface moments are linear in the deflections.
    let ad = state.airdata(&Vector3::zeros(), p);
    for j in 0..4 {
        let mut s = [0.0; 4];
        s[j] = 1.0;
        let m = surface_moment(&ad, &Surfaces::from_array(s), &p.aero);
        a.fixed_view_mut::<3, 1>(3, 4 + j).copy_from(&m);
    }
    a
}

/// Memory of the allocator between calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorState {
    /// Actuator setpoint of the previous call.
    pub u_trim: [f64; NUM_ACTUATORS],
    /// Wrench produced at `u_trim`.
    pub w_prev: Wrench,
}

impl AllocatorState {
    /// Trim at the plant's current actuators, clamped into the nominal box.
    pub fn from_plant(state: &PlantState, p: &VehicleParams) -> Result<Self, ModelError> {
        let a = &state.actuators;
        let (lb, ub) = nominal_bounds();
        let mut u = [0.0; NUM_ACTUATORS];
        u[..4].copy_from_slice(&a.rotor_speed);
        u[4..].copy_from_slice(&a.surfaces);
        for i in 0..NUM_ACTUATORS {
            u[i] = u[i].clamp(lb[i], ub[i]);
        }
        Self::at(state, u, p)
    }

    /// Trim at `u`, with the produced wrench re-evaluated from the model.
    pub fn at(state: &PlantState, u: [f64; NUM_ACTUATORS], p: &VehicleParams) -> Result<Self, ModelError> {
        Ok(Self { u_trim: u, w_prev: actuator_wrench(state, &u, p)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub u_sp: [f64; NUM_ACTUATORS],
    pub delta_u: [f64; NUM_ACTUATORS],
    /// A·Δu − ΔW.
    pub residual: Wrench,
    pub saturated: bool,
}

/// One allocation step. Failed actuators, those whose failure bounds pin
/// them to a single value, lose their column in `a`.
pub fn allocate(
    w_sp: &Wrench,
    st: &AllocatorState,
    a: &Effectiveness,
    fail: Option<&ActiveFailure>,
) -> Result<Allocation, QpError> {
    let (mut lb_abs, mut ub_abs) = nominal_bounds();
    if let Some(f) = fail {
        lb_abs = f.lb;
        ub_abs = f.ub;
    }
    let dw = DVector::from_row_slice(&(*w_sp - st.w_prev).to_array());
    let mut am = DMatrix::from_column_slice(6, NUM_ACTUATORS, a.as_slice());
    let mut lb = DVector::zeros(NUM_ACTUATORS);
    let mut ub = DVector::zeros(NUM_ACTUATORS);
    for i in 0..NUM_ACTUATORS {
        if lb_abs[i] > ub_abs[i] {
            return Err(QpError::InconsistentBounds(i));
        }
        if lb_abs[i] == ub_abs[i] {
            am.column_mut(i).fill(0.0);
        }
        lb[i] = lb_abs[i] - st.u_trim[i];
        ub[i] = ub_abs[i] - st.u_trim[i];
    }
    let problem = BoundedLsqProblem { a: am, b: dw, lb, ub };
    let sol = solve_bounded_lsq(&problem)?;

    let mut u_sp = [0.0; NUM_ACTUATORS];
    let mut delta_u = [0.0; NUM_ACTUATORS];
    for i in 0..NUM_ACTUATORS {
        delta_u[i] = sol.x[i];
        // Guard against round-off pushing the sum just outside the box.
        u_sp[i] = (st.u_trim[i] + sol.x[i]).clamp(lb_abs[i], ub_abs[i]);
    }
    let r = &problem.a * &sol.x - &problem.b;
    let residual = Wrench::from_array(&[r[0], r[1], r[2], r[3], r[4], r[5]]);
    let saturated = residual.force.norm() > SATURATION_FORCE || residual.moment.norm() > SATURATION_MOMENT;
    Ok(Allocation { u_sp, delta_u, residual, saturated })
}

/// Force part of the wrench setpoint: collective thrust shared equally by
/// the rotors along their current tilt directions.
pub fn thrust_force(thrust: f64, tilt: &[f64; 4]) -> Vector3<f64> {
    tilt.iter().map(|c| tilt_direction(*c)).sum::<Vector3<f64>>() * (thrust / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hover_trim(p: &VehicleParams) -> [f64; NUM_ACTUATORS] {
        let w = p.hover_rotor_speed();
        [w, w, w, w, 0.0, 0.0, 0.0, 0.0]
    }

    #[test]
    fn hover_thrust_derivative() {
        let p = VehicleParams::default();
        let s = PlantState::hover(&p);
        let a = effectiveness_matrix(&s, &hover_trim(&p), &p);
        for i in 0..4 {
            assert_relative_eq!(a[(2, i)], -2.0 * p.c_f * p.hover_rotor_speed(), epsilon = 1e-12);
            // 2·27.36·0.81594 = 44.648, which rounds to the quoted 44.66 only at 0.02.
            assert_relative_eq!(a[(2, i)], -44.66, epsilon = 0.02);
        }
    }

    #[test]
    fn no_surface_authority_at_rest() {
        let p = VehicleParams::default();
        let a = effectiveness_matrix(&PlantState::hover(&p), &hover_trim(&p), &p);
        for j in 4..8 {
            assert!(a.column(j).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn unchanged_setpoint_gives_zero_step() {
        let p = VehicleParams::default();
        let s = PlantState::hover(&p);
        let st = AllocatorState::at(&s, hover_trim(&p), &p).unwrap();
        let a = effectiveness_matrix(&s, &st.u_trim, &p);
        let out = allocate(&st.w_prev, &st, &a, None).unwrap();
        assert!(out.delta_u.iter().all(|d| d.abs() < 1e-12));
        assert_eq!(out.u_sp, st.u_trim);
        assert!(!out.saturated);
    }

    #[test]
    fn hover_wrench_is_reached_from_low_throttle() {
        let p = VehicleParams::default();
        let s = PlantState::hover(&p);
        let mut st = AllocatorState::at(&s, [0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0], &p).unwrap();
        let w_sp = Wrench::new(Vector3::new(0.0, 0.0, -p.weight()), Vector3::zeros());
        for _ in 0..20 {
            let a = effectiveness_matrix(&s, &st.u_trim, &p);
            let out = allocate(&w_sp, &st, &a, None).unwrap();
            st = AllocatorState::at(&s, out.u_sp, &p).unwrap();
        }
        for i in 0..4 {
            assert_relative_eq!(st.u_trim[i], p.hover_rotor_speed(), epsilon = 1e-9);
        }
    }

    #[test]
    fn failed_rotor_is_never_commanded() {
        let p = VehicleParams::default();
        let s = PlantState::hover(&p);
        let st = AllocatorState::at(&s, hover_trim(&p), &p).unwrap();
        let mut f = ActiveFailure::nominal();
        f.lb[0] = 0.0;
        f.ub[0] = 0.0;
        let a = effectiveness_matrix(&s, &st.u_trim, &p);
        let w_sp = Wrench::new(Vector3::new(0.0, 0.0, -80.0), Vector3::new(0.5, 0.0, 0.0));
        let out = allocate(&w_sp, &st, &a, Some(&f)).unwrap();
        assert_eq!(out.u_sp[0], 0.0);
    }

    #[test]
    fn excessive_demand_flags_saturation() {
        let p = VehicleParams::default();
        let s = PlantState::hover(&p);
        let st = AllocatorState::at(&s, hover_trim(&p), &p).unwrap();
        let a = effectiveness_matrix(&s, &st.u_trim, &p);
        let w_sp = Wrench::new(Vector3::new(0.0, 0.0, -500.0), Vector3::zeros());
        let out = allocate(&w_sp, &st, &a, None).unwrap();
        assert!(out.saturated);
        assert!(out.u_sp[..4].iter().all(|w| *w == 1.0));
    }

    #[test]
    fn thrust_force_follows_tilt() {
        let f = thrust_force(40.0, &[std::f64::consts::FRAC_PI_2; 4]);
        assert_relative_eq!(f, Vector3::new(40.0, 0.0, 0.0), epsilon = 1e-12);
        let f = thrust_force(40.0, &[0.0; 4]);
        assert_relative_eq!(f, Vector3::new(0.0, 0.0, -40.0), epsilon = 1e-12);
    }
}
