//! Unified velocity MPC. One controller covers hover, transition and
//! wing-borne flight; the tilt angles are states and their rates inputs, so
//! no flight-mode variable appears anywhere in this path.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::io::Write;

use super::attitude::{attitude_error, inner_loop_torque, AttitudeGains};
use super::cost::{self, MpcWeights, SoftConstants, STAGE_RESIDUALS, TERMINAL_RESIDUALS};
use crate::model::aero::{aero_force, airdata_from_body_velocity};
use crate::model::frames::{body_to_inertial, tilt_direction, wrap_angle};
use crate::model::VehicleParams;
use crate::optim::{solve_nlp_with, NlpOptions, NlpProblem, NlpSolution, OcpModel, SolveStatus, SqpIterate};

pub const STATE_DIM: usize = 16;
pub const INPUT_DIM: usize = 8;

/// x = [v, χ, Ψ, Ψ̇, Ψ̇⁻].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpcState {
    /// Inertial velocity, m/s.
    pub v: Vector3<f64>,
    pub chi: [f64; 4],
    pub psi: Vector3<f64>,
    pub psi_dot: Vector3<f64>,
    /// Attitude rate at the previous controller tick.
    pub psi_dot_prev: Vector3<f64>,
}

impl MpcState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut a = [0.0; STATE_DIM];
        a[0..3].copy_from_slice(self.v.as_slice());
        a[3..7].copy_from_slice(&self.chi);
        a[7..10].copy_from_slice(self.psi.as_slice());
        a[10..13].copy_from_slice(self.psi_dot.as_slice());
        a[13..16].copy_from_slice(self.psi_dot_prev.as_slice());
        a
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self {
            v: Vector3::new(a[0], a[1], a[2]),
            chi: [a[3], a[4], a[5], a[6]],
            psi: Vector3::new(a[7], a[8], a[9]),
            psi_dot: Vector3::new(a[10], a[11], a[12]),
            psi_dot_prev: Vector3::new(a[13], a[14], a[15]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// u = [χ̇, T, Ψ_d].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MpcInput {
    pub chi_rate: [f64; 4],
    /// Collective thrust, N.
    pub thrust: f64,
    pub psi_d: Vector3<f64>,
}

impl MpcInput {
    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        let mut a = [0.0; INPUT_DIM];
        a[0..4].copy_from_slice(&self.chi_rate);
        a[4] = self.thrust;
        a[5..8].copy_from_slice(self.psi_d.as_slice());
        a
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self { chi_rate: [a[0], a[1], a[2], a[3]], thrust: a[4], psi_d: Vector3::new(a[5], a[6], a[7]) }
    }
}

/// Actuator state the velocity controller plans with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorHealth {
    /// Largest thrust each rotor can still give, N. Zero marks a dead rotor.
    pub rotor_thrust_max: [f64; 4],
    /// Reachable servo interval, rad.
    pub tilt_lb: [f64; 4],
    pub tilt_ub: [f64; 4],
    /// Angle a jammed servo is stuck at, rad.
    pub tilt_jam: [Option<f64>; 4],
}

impl ActuatorHealth {
    pub fn nominal(p: &VehicleParams) -> Self {
        Self {
            rotor_thrust_max: [p.thrust_per_rotor_max; 4],
            tilt_lb: [p.tilt_range[0]; 4],
            tilt_ub: [p.tilt_range[1]; 4],
            tilt_jam: [None; 4],
        }
    }

    /// Rotor limits in normalized speed, servo limits in rad.
    pub fn degraded(
        p: &VehicleParams,
        rotor_ub: [f64; 4],
        tilt_lb: [f64; 4],
        tilt_ub: [f64; 4],
        tilt_jam: [Option<f64>; 4],
    ) -> Self {
        Self {
            rotor_thrust_max: std::array::from_fn(|i| {
                // A dead rotor idles its diagonal partner too: the pair's
                // thrust only balances in roll and pitch together.
                let u = if rotor_ub[diagonal_partner(p, i)] > 0.0 { rotor_ub[i].max(0.0) } else { 0.0 };
                (p.c_f * u * u).min(p.thrust_per_rotor_max)
            }),
            tilt_lb: std::array::from_fn(|i| tilt_lb[i].max(p.tilt_range[0])),
            tilt_ub: std::array::from_fn(|i| tilt_ub[i].min(p.tilt_range[1])),
            tilt_jam,
        }
    }

    pub fn live(&self) -> [bool; 4] {
        self.rotor_thrust_max.map(|t| t > 0.0)
    }

    pub fn live_count(&self) -> usize {
        self.live().iter().filter(|&&l| l).count()
    }

    /// Collective thrust bound under the equal-share model.
    pub fn collective_max(&self) -> f64 {
        let live: Vec<f64> = self.rotor_thrust_max.iter().copied().filter(|&t| t > 0.0).collect();
        live.iter().copied().fold(f64::INFINITY, f64::min) * live.len() as f64
    }
}

/// Rotor mounted most nearly opposite rotor `i` across the centre of gravity.
pub fn diagonal_partner(p: &VehicleParams, i: usize) -> usize {
    (0..4)
        .filter(|&j| j != i)
        .min_by(|&a, &b| {
            let d = |j: usize| (p.rotor_pos[i] + p.rotor_pos[j]).norm();
            d(a).total_cmp(&d(b))
        })
        .unwrap_or(i)
}

/// Yaw moment of the tilted rotors per newton of thrust on each live rotor.
pub fn tilt_yaw_moment(chi: &[f64; 4], live: &[bool; 4], p: &VehicleParams) -> f64 {
    (0..4)
        .filter(|&i| live[i])
        .map(|i| {
            let n = tilt_direction(chi[i]);
            p.rotor_pos[i].cross(&n).z + p.spin_sign(i) * p.c_k / p.c_f * n.z
        })
        .sum()
}

/// One Euler-forward step of the prediction model.
///
/// The inner attitude loop is embedded: Ψ_d produces a torque through the
/// same rate loop the vehicle runs, and Ψ̇⁻ of the next state is the current Ψ̇.
pub fn mpc_predict(x: &MpcState, u: &MpcInput, dt: f64, gains: &AttitudeGains, p: &VehicleParams) -> MpcState {
    mpc_predict_with(x, u, dt, gains, p, &[true; 4])
}

/// [`mpc_predict`] with the collective thrust shared by the `live` rotors only.
pub fn mpc_predict_with(
    x: &MpcState,
    u: &MpcInput,
    dt: f64,
    gains: &AttitudeGains,
    p: &VehicleParams,
    live: &[bool; 4],
) -> MpcState {
    let accel = linear_accel(x, u, p, live);
    let ang_accel = angular_accel(x, u, gains, p);
    MpcState {
        v: x.v + dt * accel,
        chi: std::array::from_fn(|i| x.chi[i] + dt * u.chi_rate[i]),
        psi: x.psi + dt * x.psi_dot,
        psi_dot: x.psi_dot + dt * ang_accel,
        psi_dot_prev: x.psi_dot,
    }
}

/// Inertial acceleration. Depends on v, χ, Ψ and the thrust only.
fn linear_accel(x: &MpcState, u: &MpcInput, p: &VehicleParams, live: &[bool; 4]) -> Vector3<f64> {
    let r = body_to_inertial(&x.psi);
    let n_live = live.iter().filter(|&&l| l).count().max(1);
    let share = u.thrust / n_live as f64;
    let thrust_body: Vector3<f64> =
        x.chi.iter().zip(live).filter(|(_, &l)| l).map(|(&c, _)| share * tilt_direction(c)).sum();
    let air = airdata_from_body_velocity(&(r.transpose() * x.v), p.aero.rho);
    let force_body = thrust_body + aero_force(&air, &p.aero);
    r * force_body / p.mass + Vector3::new(0.0, 0.0, p.gravity)
}

/// Angular acceleration under the inner loop. Depends on Ψ, its rates and Ψ_d only.
fn angular_accel(x: &MpcState, u: &MpcInput, gains: &AttitudeGains, p: &VehicleParams) -> Vector3<f64> {
    let err = attitude_error(&u.psi_d, &x.psi);
    let tau = inner_loop_torque(&err, &x.psi_dot, &x.psi_dot_prev, gains);
    tau.component_div(&p.inertia_diag)
}

/// Adds `dt` times the central-difference Jacobian of `f` to rows
/// `row..row + 3`, over the listed state and input columns.
#[allow(clippy::too_many_arguments)]
fn add_fd_columns(
    f: impl Fn(&MpcState, &MpcInput) -> Vector3<f64>,
    x: &[f64],
    u: &[f64],
    x_cols: std::ops::Range<usize>,
    u_cols: std::ops::Range<usize>,
    row: usize,
    dt: f64,
    jx: &mut DMatrix<f64>,
    ju: &mut DMatrix<f64>,
) {
    let mut xp: [f64; STATE_DIM] = std::array::from_fn(|i| x[i]);
    let mut up: [f64; INPUT_DIM] = std::array::from_fn(|i| u[i]);
    let us = MpcInput::from_slice(u);
    let xs = MpcState::from_slice(x);
    for j in x_cols {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&MpcState::from_slice(&xp), &us);
        xp[j] = x[j] - h;
        let fm = f(&MpcState::from_slice(&xp), &us);
        xp[j] = x[j];
        for i in 0..3 {
            jx[(row + i, j)] += dt * (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    for j in u_cols {
        let h = 1e-6 * u[j].abs().max(1.0);
        up[j] = u[j] + h;
        let fp = f(&xs, &MpcInput::from_slice(&up));
        up[j] = u[j] - h;
        let fm = f(&xs, &MpcInput::from_slice(&up));
        up[j] = u[j];
        for i in 0..3 {
            ju[(row + i, j)] += dt * (fp[i] - fm[i]) / (2.0 * h);
        }
    }
}

/// Horizon, boxes and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub weights: MpcWeights,
    pub soft: SoftConstants,
    /// Weight of the quadratic penalty on state-box violations.
    pub state_penalty: f64,
    /// |v| box, m/s. Setpoints are clipped to it as well.
    pub velocity_box: [f64; 3],
    /// |Ψ| box, rad.
    pub attitude_box: [f64; 3],
    /// |Ψ̇| box, rad/s.
    pub rate_box: [f64; 3],
    /// |Ψ_d| box, rad; the yaw entry is relative to the reference heading.
    pub attitude_sp_box: [f64; 3],
    /// Horizontal setpoint speed above which the reference heading follows its course, m/s.
    pub heading_min_speed: f64,
    /// Largest lead of the tilt command over the measured tilt, rad.
    pub tilt_lead_max: f64,
    /// Weight on the yaw moment left by asymmetric tilt at hover thrust, 1/(N·m)².
    pub yaw_balance: f64,
    pub max_iter: usize,
    pub kkt_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            dt: 0.01,
            weights: MpcWeights::default(),
            soft: SoftConstants::default(),
            state_penalty: 1e3,
            velocity_box: [30.0, 30.0, 10.0],
            attitude_box: [FRAC_PI_4, FRAC_PI_4, f64::INFINITY],
            rate_box: [PI; 3],
            attitude_sp_box: [FRAC_PI_3, FRAC_PI_3, FRAC_PI_2],
            heading_min_speed: 1.0,
            tilt_lead_max: 0.1,
            yaw_balance: 5.0,
            max_iter: 30,
            kkt_tol: 1e-4,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon < 1 {
            return Err("mpc.horizon must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return Err("mpc.dt must be positive".into());
        }
        if !(self.state_penalty >= 0.0) || !(self.tilt_lead_max >= 0.0) || !(self.yaw_balance >= 0.0) {
            return Err("mpc penalties and limits must be non-negative".into());
        }
        let boxes =
            self.velocity_box.iter().chain(&self.attitude_box).chain(&self.rate_box).chain(&self.attitude_sp_box);
        if boxes.into_iter().any(|b| !(*b > 0.0)) {
            return Err("mpc boxes must be positive".into());
        }
        self.weights.validate()
    }
}

/// The MPC transcription handed to the SQP solver.
pub struct MpcModel<'a> {
    pub cfg: &'a MpcConfig,
    pub gains: &'a AttitudeGains,
    pub params: &'a VehicleParams,
    pub v_sp: Vector3<f64>,
    /// Attitude the attitude terms are measured from, heading frame.
    pub psi_ref: Vector3<f64>,
    pub health: ActuatorHealth,
}

impl MpcModel<'_> {
    fn yaw_residual(&self, chi: &[f64; 4]) -> f64 {
        let share = self.params.weight() / self.health.live_count().max(1) as f64;
        self.cfg.yaw_balance.sqrt() * share * tilt_yaw_moment(chi, &self.health.live(), self.params)
    }
}

impl OcpModel for MpcModel<'_> {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }
    fn input_dim(&self) -> usize {
        INPUT_DIM
    }
    fn stage_residual_dim(&self) -> usize {
        STAGE_RESIDUALS + 1
    }
    fn terminal_residual_dim(&self) -> usize {
        TERMINAL_RESIDUALS + 1
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
        let live = self.health.live();
        let n =
            mpc_predict_with(&MpcState::from_slice(x), &MpcInput::from_slice(u), dt, self.gains, self.params, &live);
        next.copy_from_slice(&n.to_array());
    }

    // Only the velocity and rate rows are nonlinear; the rest is filled in directly.
    fn dynamics_jacobian(&self, x: &[f64], u: &[f64], dt: f64, jx: &mut DMatrix<f64>, ju: &mut DMatrix<f64>) {
        jx.fill(0.0);
        ju.fill(0.0);
        for i in 0..13 {
            jx[(i, i)] = 1.0;
        }
        for i in 0..3 {
            jx[(7 + i, 10 + i)] = dt;
            jx[(13 + i, 10 + i)] = 1.0;
        }
        for i in 0..4 {
            ju[(3 + i, i)] = dt;
        }
        let live = self.health.live();
        let (p, gains) = (self.params, self.gains);
        add_fd_columns(|x, u| linear_accel(x, u, p, &live), x, u, 0..10, 4..5, 0, dt, jx, ju);
        add_fd_columns(|x, u| angular_accel(x, u, gains, p), x, u, 7..16, 5..8, 10, dt, jx, ju);
    }

    fn stage_residuals(&self, _k: usize, x: &[f64], u: &[f64], r: &mut [f64]) {
        let mut out = [0.0; STAGE_RESIDUALS];
        let xs = MpcState::from_slice(x);
        cost::stage_residuals(
            &xs,
            &MpcInput::from_slice(u),
            &self.v_sp,
            &self.psi_ref,
            &self.cfg.weights,
            &self.cfg.soft,
            &mut out,
        );
        r[..STAGE_RESIDUALS].copy_from_slice(&out);
        r[STAGE_RESIDUALS] = self.yaw_residual(&xs.chi);
    }

    fn terminal_residuals(&self, x: &[f64], r: &mut [f64]) {
        let mut out = [0.0; TERMINAL_RESIDUALS];
        let xs = MpcState::from_slice(x);
        cost::terminal_residuals(&xs, &self.v_sp, &self.psi_ref, &self.cfg.weights, &self.cfg.soft, &mut out);
        r[..TERMINAL_RESIDUALS].copy_from_slice(&out);
        r[TERMINAL_RESIDUALS] = self.yaw_residual(&xs.chi);
    }

    // Only the attitude entries of the residual depend on u; the rest are
    // constant in u, so the input columns are filled analytically.
    fn stage_jacobian(&self, k: usize, x: &[f64], u: &[f64], jx: &mut DMatrix<f64>, ju: &mut DMatrix<f64>) {
        let mut jx_scratch = DMatrix::zeros(STAGE_RESIDUALS + 1, STATE_DIM);
        let mut none = DMatrix::zeros(STAGE_RESIDUALS + 1, 0);
        crate::optim::sqp::central_difference(
            |x, _, out| self.stage_residuals(k, x, u, out),
            x,
            &[],
            &mut jx_scratch,
            &mut none,
        );
        jx.copy_from(&jx_scratch);
        let w = &self.cfg.weights;
        ju.fill(0.0);
        ju[(10, 4)] = w.r_thrust.sqrt() / w.thrust_scale;
        for i in 0..4 {
            ju[(11 + i, i)] = w.r_tilt_rate.sqrt();
        }
        for i in 0..3 {
            ju[(15 + i, 5 + i)] = w.r_psi_d[i].sqrt();
        }
    }
}

/// First input of the solved horizon, mapped back to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpcOutput {
    /// Attitude setpoint with absolute yaw, rad.
    pub psi_sp: Vector3<f64>,
    pub thrust_sp: f64,
    pub tilt_target: [f64; 4],
    pub tilt_rate: [f64; 4],
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Reference heading the problem was posed in, rad.
    pub heading: f64,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    tick: usize,
    #[serde(flatten)]
    it: &'a SqpIterate,
}

/// Receding-horizon controller holding its warm start and tilt command.
///
/// The problem is posed in a frame yawed to a reference heading: the course
/// of the setpoint when it is fast enough, otherwise the last heading. The
/// yaw state and yaw setpoint are relative to it, which keeps the yaw box and
/// yaw cost meaningful through full turns.
pub struct MpcController {
    pub cfg: MpcConfig,
    pub gains: AttitudeGains,
    pub params: VehicleParams,
    warm: Option<NlpSolution>,
    heading: Option<f64>,
    tilt_memory: Option<[f64; 4]>,
    trace: Option<Box<dyn Write + Send>>,
    ticks: usize,
    /// Initial state and setpoint of the last solve, in the heading frame.
    last_problem: Option<([f64; STATE_DIM], Vector3<f64>, Vector3<f64>)>,
    /// Whether the last tick's heading followed the setpoint course.
    was_following: bool,
    health: ActuatorHealth,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, gains: AttitudeGains, params: VehicleParams) -> Self {
        let health = ActuatorHealth::nominal(&params);
        Self {
            cfg,
            gains,
            params,
            warm: None,
            heading: None,
            tilt_memory: None,
            trace: None,
            ticks: 0,
            last_problem: None,
            was_following: false,
            health,
        }
    }

    /// Write every SQP iteration as a JSON line to `sink`.
    pub fn set_trace(&mut self, sink: Box<dyn Write + Send>) {
        self.trace = Some(sink);
    }

    /// Plan with degraded actuators from the next tick on.
    pub fn set_health(&mut self, health: ActuatorHealth) {
        if health != self.health {
            self.health = health;
            self.last_problem = None;
        }
    }

    pub fn health(&self) -> &ActuatorHealth {
        &self.health
    }

    pub fn reset(&mut self) {
        self.warm = None;
        self.heading = None;
        self.tilt_memory = None;
        self.last_problem = None;
        self.was_following = false;
    }

    pub fn warm_start(&self) -> Option<&NlpSolution> {
        self.warm.as_ref()
    }

    pub fn clip_setpoint(&self, v_sp: &Vector3<f64>) -> Vector3<f64> {
        let b = self.cfg.velocity_box;
        Vector3::from_fn(|i, _| v_sp[i].clamp(-b[i], b[i]))
    }

    fn hold_output(&self, x: &MpcState, status: SolveStatus, iterations: usize, kkt: f64) -> MpcOutput {
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        let heading = self.heading.unwrap_or(0.0);
        MpcOutput {
            psi_sp: Vector3::new(0.0, 0.0, if x.psi.z.is_finite() { x.psi.z } else { heading }),
            thrust_sp: self.params.weight().min(self.health.collective_max()),
            tilt_target: x.chi.map(|c| self.params.clamp_tilt(finite(c))),
            tilt_rate: [0.0; 4],
            status,
            iterations,
            kkt_residual: kkt,
            heading,
        }
    }

    pub fn step(&mut self, x_now: &MpcState, v_sp: &Vector3<f64>) -> MpcOutput {
        self.ticks += 1;
        if !x_now.is_finite() || !v_sp.iter().all(|v| v.is_finite()) {
            self.warm = None;
            return self.hold_output(x_now, SolveStatus::NumericFail, 0, f64::INFINITY);
        }
        let sp = self.clip_setpoint(v_sp);

        let old_heading = *self.heading.get_or_insert(x_now.psi.z);
        let following = sp.xy().norm() >= self.cfg.heading_min_speed;
        let heading = if following { sp.y.atan2(sp.x) } else { old_heading };
        self.heading = Some(heading);
        let delta = wrap_angle(heading - old_heading);
        // A turning setpoint is flown as a coordinated turn: roll is measured
        // from the bank that balances the turn with lift.
        let turn_rate = if following && self.was_following { delta / self.cfg.dt } else { 0.0 };
        self.was_following = following;
        let bank = (sp.xy().norm() * turn_rate / self.params.gravity).atan();
        let psi_ref = Vector3::new(bank.clamp(-self.cfg.attitude_box[0], self.cfg.attitude_box[0]), 0.0, 0.0);
        if delta != 0.0 {
            if let Some(w) = self.warm.as_mut() {
                rotate_solution(w, delta);
            }
        }

        let to_frame = Rotation3::from_axis_angle(&Vector3::z_axis(), -heading);
        let x0 = MpcState {
            v: to_frame * x_now.v,
            psi: Vector3::new(x_now.psi.x, x_now.psi.y, wrap_angle(x_now.psi.z - heading)),
            ..*x_now
        };
        let model = MpcModel {
            cfg: &self.cfg,
            gains: &self.gains,
            params: &self.params,
            v_sp: to_frame * sp,
            psi_ref,
            health: self.health,
        };

        let p = &self.params;
        let c = &self.cfg;
        let h = &self.health;
        let rate = p.tilt_rate_max;
        let mut input_lb = DVector::from_row_slice(&[
            -rate,
            -rate,
            -rate,
            -rate,
            0.0,
            -c.attitude_sp_box[0],
            -c.attitude_sp_box[1],
            -c.attitude_sp_box[2],
        ]);
        let mut input_ub = DVector::from_row_slice(&[
            rate,
            rate,
            rate,
            rate,
            h.collective_max(),
            c.attitude_sp_box[0],
            c.attitude_sp_box[1],
            c.attitude_sp_box[2],
        ]);
        let mut state_ub = [f64::INFINITY; STATE_DIM];
        state_ub[0..3].copy_from_slice(&c.velocity_box);
        state_ub[3..7].copy_from_slice(&h.tilt_ub);
        state_ub[7..10].copy_from_slice(&c.attitude_box);
        state_ub[10..13].copy_from_slice(&c.rate_box);
        let mut state_lb = state_ub.map(|v| -v);
        state_lb[3..7].copy_from_slice(&h.tilt_lb);
        for i in 0..4 {
            if let Some(jam) = h.tilt_jam[i] {
                // A jammed servo is not ours to move: it drifts onto the jam angle.
                let drift = ((jam - x_now.chi[i]) / c.dt).clamp(-rate, rate);
                input_lb[i] = drift;
                input_ub[i] = drift;
                state_lb[3 + i] = p.tilt_range[0];
                state_ub[3 + i] = p.tilt_range[1];
            }
        }
        let guess = MpcInput { thrust: p.weight().min(h.collective_max()), ..MpcInput::default() };

        let problem = NlpProblem {
            model: &model,
            horizon: c.horizon,
            dt: c.dt,
            x0: DVector::from_row_slice(&x0.to_array()),
            input_lb,
            input_ub,
            state_lb: DVector::from_row_slice(&state_lb),
            state_ub: DVector::from_row_slice(&state_ub),
            state_penalty: c.state_penalty,
            input_guess: DVector::from_row_slice(&guess.to_array()),
        };
        // Time only advances between different problems; an identical re-solve
        // starts from the previous solution as is.
        let key = (x0.to_array(), model.v_sp, psi_ref);
        let unchanged = self.last_problem.as_ref() == Some(&key);
        self.last_problem = Some(key);
        let opts =
            NlpOptions { kkt_tol: c.kkt_tol, max_iter: c.max_iter, shift_warm: !unchanged, ..NlpOptions::default() };

        let tick = self.ticks;
        let sol = match self.trace.as_mut() {
            Some(sink) => {
                let mut cb = |it: &SqpIterate| {
                    if let Ok(line) = serde_json::to_string(&TraceLine { tick, it }) {
                        let _ = writeln!(sink, "{line}");
                    }
                };
                solve_nlp_with(&problem, self.warm.as_ref(), &opts, Some(&mut cb))
            }
            None => solve_nlp_with(&problem, self.warm.as_ref(), &opts, None),
        };

        let u0 = MpcInput::from_slice(sol.inputs[0].as_slice());
        let usable = sol.status.is_usable() && u0.to_array().iter().all(|v| v.is_finite());
        if !usable {
            self.warm = None;
            let status = if sol.status.is_usable() { SolveStatus::NumericFail } else { sol.status };
            return self.hold_output(x_now, status, sol.iterations, sol.kkt_residual);
        }

        let memory = self.tilt_memory.get_or_insert(x_now.chi);
        let lead = c.tilt_lead_max;
        for i in 0..4 {
            let next = memory[i] + u0.chi_rate[i] * c.dt;
            memory[i] = next.clamp(x_now.chi[i] - lead, x_now.chi[i] + lead).clamp(h.tilt_lb[i], h.tilt_ub[i]);
        }
        let out = MpcOutput {
            psi_sp: Vector3::new(u0.psi_d.x, u0.psi_d.y, wrap_angle(u0.psi_d.z + heading)),
            thrust_sp: u0.thrust,
            tilt_target: *memory,
            tilt_rate: u0.chi_rate,
            status: sol.status,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            heading,
        };
        self.warm = Some(sol);
        out
    }
}

/// Re-express a solution after the reference heading advanced by `delta`.
fn rotate_solution(sol: &mut NlpSolution, delta: f64) {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -delta);
    for s in &mut sol.states {
        let v = rot * Vector3::new(s[0], s[1], s[2]);
        s[0] = v.x;
        s[1] = v.y;
        s[9] = wrap_angle(s[9] - delta);
    }
    for u in &mut sol.inputs {
        u[7] -= delta;
    }
}
