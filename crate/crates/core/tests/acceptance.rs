//! Acceptance checks. Every check prints one `criterion N: PASS|FAIL` line
//! with the measured values before asserting.
//!
//! Runs without the libtest harness so every line is printed, pass or fail,
//! and checks run one after another so the wall-clock limits measure the
//! simulator alone. Arguments select checks by substring.

mod common;

use nalgebra::{SMatrix, Vector3};
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use tiltrotor_core::allocation::{actuator_wrench, effectiveness_matrix, NUM_ACTUATORS};
use tiltrotor_core::control::SoftConstants;
use tiltrotor_core::model::{integrate_rk4, ActuatorCommand, PlantState, TiltCommand, VehicleParams};
use tiltrotor_core::optim::lsq::solve_bounded_lsq;
use tiltrotor_core::scenario::{ScenarioConfig, ScenarioKind};
use tiltrotor_core::sim::{self, ControllerKind, SimOutput};

// Tolerances and limits.
const HOVER_SPEED_MAX: f64 = 0.1;
const HOVER_STEADY_AFTER: f64 = 2.0;
const HOVER_ROTOR_CMD: f64 = 0.816;
const HOVER_ROTOR_TOL: f64 = 0.02;
const HOVER_RUNTIME_MAX: Duration = Duration::from_secs(10);
const CRUISE_SPEED: f64 = 27.74;
const REACH_TOL: f64 = 0.5;
const REACH_TIME: f64 = 14.0;
const REACH_TIME_TOL: f64 = 3.0;
const VZ_MAX: f64 = 1.0;
const CRUISE_TILT_MIN_DEG: f64 = 85.0;
const START_TILT_MAX_DEG: f64 = 5.0;
const MPC_PITCH_MAX_DEG: f64 = 25.0;
const BRAKE_TILT_MAX_DEG: f64 = 0.0;
const CIRCLE_ROLL_DEG: (f64, f64) = (12.0, 25.0);
const CIRCLE_SPEED_RMSE_MAX: f64 = 1.5;
const CIRCLE_RADIUS_ERROR_MAX: f64 = 15.0;
const JAM_RECOVERY_MAX: f64 = 5.0;
const MOTOR_ATTITUDE_RECOVERY_MAX: f64 = 5.0;
const TIGHT_CIRCLE_SATURATED_MIN: f64 = 0.5;
const QP_CASES: usize = 100;
const QP_OBJECTIVE_TOL: f64 = 1e-8;
const QP_RUNTIME_MAX: Duration = Duration::from_secs(10);
const JACOBIAN_STATES: usize = 50;
const JACOBIAN_REL_TOL: f64 = 1e-5;
const SOFT_TABLE: [(f64, f64, f64); 4] =
    [(0.0, 0.0, 0.10), (0.0, 5.0, 0.0092), (45.0, 0.0, 1.50e34), (90.0, 0.0, 2.30e69)];
const SOFT_REL_TOL: f64 = 0.02;
const FREE_FALL_TOL: f64 = 1e-9;
const RK4_ORDER_MIN: f64 = 3.9;
const ACCEL_RUNTIME_MAX: Duration = Duration::from_secs(300);

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

/// Flies one run; returns it with its wall time.
fn fly(kind: ScenarioKind, controller: ControllerKind, duration: Option<f64>) -> (SimOutput, Duration) {
    let scenario = ScenarioConfig::from_kind(kind).unwrap();
    let mut cfg = scenario.sim_config(controller);
    if let Some(d) = duration {
        cfg.duration = d;
    }
    let start = Instant::now();
    let out = sim::run(&scenario, &cfg);
    (out, start.elapsed())
}

fn acceleration() -> ScenarioKind {
    ScenarioKind::Acceleration { target_speed: CRUISE_SPEED, accel: 2.0 }
}

fn circle_kind(radius: f64) -> ScenarioKind {
    ScenarioKind::MotorOut { speed: 26.0, accel: 2.0, radius, motor: 1, trigger_yaw_deg: 90.0 }
}

fn accel_mpc() -> &'static (SimOutput, Duration) {
    static RUN: OnceLock<(SimOutput, Duration)> = OnceLock::new();
    RUN.get_or_init(|| fly(acceleration(), ControllerKind::Mpc, Some(25.0)))
}

fn csv_bytes(out: &SimOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    sim::write_csv(&out.log, &mut buf).unwrap();
    buf
}

fn criterion_01_hover_trim() -> bool {
    let (out, wall) = fly(ScenarioKind::Hover, ControllerKind::Mpc, Some(10.0));
    let p = VehicleParams::default();
    let max_speed = out.log.iter().filter(|r| r.t >= HOVER_STEADY_AFTER).map(|r| r.v.norm()).fold(0.0, f64::max);
    let mean_cmd = out.metrics.mean_rotor_cmd_steady;
    let pass = out.fault.is_none()
        && max_speed < HOVER_SPEED_MAX
        && (mean_cmd - HOVER_ROTOR_CMD).abs() <= HOVER_ROTOR_TOL
        && wall < HOVER_RUNTIME_MAX;
    report(
        1,
        pass,
        format!(
            "max |v| after {HOVER_STEADY_AFTER} s = {max_speed:.4} m/s, mean rotor command = {mean_cmd:.5} (trim {:.5}), wall {:.2} s",
            p.hover_rotor_speed(),
            wall.as_secs_f64()
        ),
    );
    pass
}

fn criterion_02_acceleration() -> bool {
    let (out, _) = accel_mpc();
    let reach = out.log.iter().find(|r| r.v.x >= CRUISE_SPEED - REACH_TOL).map(|r| r.t);
    let m = &out.metrics;
    let start_tilt = out.log[0].tilt.iter().sum::<f64>() / 4.0;
    let reach_ok = reach.is_some_and(|t| (t - REACH_TIME).abs() <= REACH_TIME_TOL);
    // The MPC path carries no flight mode: no mode label and no fallback ticks.
    let unified = out.log.iter().all(|r| r.mode.is_empty()) && out.fallback_ticks == 0;
    let source = include_str!("../src/control/mpc.rs");
    let no_mode_in_source = !source.contains("FlightMode");
    let pass = out.fault.is_none()
        && reach_ok
        && m.max_abs_vz <= VZ_MAX
        && start_tilt.to_degrees() <= START_TILT_MAX_DEG
        && m.max_mean_tilt.to_degrees() >= CRUISE_TILT_MIN_DEG
        && unified
        && no_mode_in_source;
    report(
        2,
        pass,
        format!(
            "reach time = {}, top speed = {:.2} m/s, max |v_z| = {:.3} m/s, mean tilt {:.1} -> max {:.1} deg, unified = {}",
            reach.map_or("never".to_string(), |t| format!("{t:.2} s")),
            m.max_horizontal_speed,
            m.max_abs_vz,
            start_tilt.to_degrees(),
            m.max_mean_tilt.to_degrees(),
            unified && no_mode_in_source
        ),
    );
    pass
}

fn criterion_03_pitch_envelope() -> bool {
    let (mpc, _) = accel_mpc();
    let (pid, _) = fly(acceleration(), ControllerKind::BaselinePid, Some(25.0));
    let mpc_pitch = mpc.metrics.max_abs_pitch.to_degrees();
    let pid_pitch = pid.metrics.max_abs_pitch.to_degrees();
    let pass = mpc_pitch <= MPC_PITCH_MAX_DEG && pid_pitch > mpc_pitch;
    report(3, pass, format!("max |pitch| mpc = {mpc_pitch:.2} deg, pid = {pid_pitch:.2} deg"));
    pass
}

fn criterion_04_accel_decel() -> bool {
    let kind = ScenarioKind::AccelDecel { target_speed: CRUISE_SPEED, accel: 2.0, hold: 4.0, decel: 2.0 };
    let (out, _) = fly(kind, ControllerKind::Mpc, None);
    let m = &out.metrics;
    let pass = out.fault.is_none() && m.min_tilt_cmd.to_degrees() <= BRAKE_TILT_MAX_DEG && m.max_abs_vz <= VZ_MAX;
    report(
        4,
        pass,
        format!("min tilt command = {:.2} deg, max |v_z| = {:.3} m/s", m.min_tilt_cmd.to_degrees(), m.max_abs_vz),
    );
    pass
}

fn criterion_05_circle() -> bool {
    let kind = ScenarioKind::Circle { speed: 26.0, accel: 2.0, radius: 250.0 };
    let (out, _) = fly(kind, ControllerKind::Mpc, Some(30.0));
    let m = &out.metrics;
    let roll = m.circle_mean_roll.unwrap_or(f64::NAN).to_degrees();
    let speed_rmse = m.circle_speed_rmse.unwrap_or(f64::INFINITY);
    let radius_err = m.circle_radius_error.unwrap_or(f64::INFINITY);
    let pass = out.fault.is_none()
        && (CIRCLE_ROLL_DEG.0..=CIRCLE_ROLL_DEG.1).contains(&roll)
        && speed_rmse < CIRCLE_SPEED_RMSE_MAX
        && radius_err < CIRCLE_RADIUS_ERROR_MAX;
    report(
        5,
        pass,
        format!(
            "steady roll = {roll:.2} deg (coordinated {:.2}), speed rmse = {speed_rmse:.3} m/s, radial error = {radius_err:.2} m",
            (26.0f64 * 26.0 / (9.81 * 250.0)).atan().to_degrees()
        ),
    );
    pass
}

fn criterion_06_servo_jam() -> bool {
    let kind = ScenarioKind::ServoJam {
        target_speed: CRUISE_SPEED,
        accel: 2.0,
        servo: 1,
        angle_deg: 60.0,
        trigger_airspeed: 8.0,
    };
    let (out, _) = fly(kind, ControllerKind::Mpc, None);
    let m = &out.metrics;
    let recovery = m.recovery_time.unwrap_or(f64::INFINITY);
    let pass = out.fault.is_none() && m.failure_time.is_some() && recovery <= JAM_RECOVERY_MAX;
    // For the record: the worst error in the window the check looks at.
    let tf = m.failure_time.unwrap_or(f64::INFINITY);
    let window_err = out
        .log
        .iter()
        .filter(|r| r.t >= tf && r.t <= tf + JAM_RECOVERY_MAX)
        .map(|r| (r.v - r.v_sp).norm())
        .fold(0.0, f64::max);
    report(
        6,
        pass,
        format!(
            "jam at {}, velocity error back under 1 m/s for good after {recovery:.2} s \
             (worst error in the first {JAM_RECOVERY_MAX} s = {window_err:.3} m/s), fault = {:?}",
            m.failure_time.map_or("never".to_string(), |t| format!("{t:.2} s")),
            out.fault.as_ref().map(|f| f.to_string())
        ),
    );
    pass
}

fn criterion_07_motor_out() -> bool {
    let (wide, _) = fly(circle_kind(250.0), ControllerKind::Mpc, None);
    let (tight, _) = fly(circle_kind(150.0), ControllerKind::Mpc, None);
    let m = &wide.metrics;
    let att = m.attitude_recovery_time.unwrap_or(f64::INFINITY);
    let wide_ok = wide.fault.is_none() && m.failure_time.is_some() && att <= MOTOR_ATTITUDE_RECOVERY_MAX;
    let sat = tight.metrics.saturated_fraction_after_failure.unwrap_or(0.0);
    let tight_ok = tight.metrics.failure_time.is_some() && sat >= TIGHT_CIRCLE_SATURATED_MIN;
    report(
        7,
        wide_ok && tight_ok,
        format!(
            "R=250: failure at {}, roll/yaw recovery {att:.2} s, fault = {:?}; R=150: saturated {:.1} % of the time after failure",
            m.failure_time.map_or("never".to_string(), |t| format!("{t:.2} s")),
            wide.fault.as_ref().map(|f| f.to_string()),
            100.0 * sat
        ),
    );
    wide_ok && tight_ok
}

fn criterion_08_allocation_qp_oracle() -> bool {
    let mut rng = common::rng(2024);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..QP_CASES {
        let p = common::random_problem(&mut rng);
        let sol = solve_bounded_lsq(&p).unwrap();
        let (_, f_oracle) = common::enumeration_oracle(&p);
        worst = worst.max((common::ridge_objective(&p, &sol.x) - f_oracle).abs());
    }
    let wall = start.elapsed();
    let pass = worst <= QP_OBJECTIVE_TOL && wall < QP_RUNTIME_MAX;
    report(8, pass, format!("{QP_CASES} cases, worst objective gap = {worst:.3e}, wall {:.2} s", wall.as_secs_f64()));
    pass
}

fn random_state(rng: &mut impl Rng, p: &VehicleParams) -> (PlantState, [f64; NUM_ACTUATORS]) {
    let mut s = PlantState::hover(p);
    let speed = rng.random_range(0.0..30.0);
    let heading = rng.random_range(-3.0..3.0);
    s.velocity = Vector3::new(speed * f64::cos(heading), speed * f64::sin(heading), rng.random_range(-2.0..2.0));
    s.attitude = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0));
    s.tilt = std::array::from_fn(|_| rng.random_range(p.tilt_range[0]..p.tilt_range[1]));
    let u = std::array::from_fn(|i| if i < 4 { rng.random_range(0.05..1.0) } else { rng.random_range(-1.0..1.0) });
    (s, u)
}

fn criterion_09_effectiveness_jacobian() -> bool {
    let p = VehicleParams::default();
    let mut rng = common::rng(99);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..JACOBIAN_STATES {
        let (s, u) = random_state(&mut rng, &p);
        let a = effectiveness_matrix(&s, &u, &p);
        let mut fd = SMatrix::<f64, 6, NUM_ACTUATORS>::zeros();
        for j in 0..NUM_ACTUATORS {
            let (mut up, mut dn) = (u, u);
            up[j] += h;
            dn[j] -= h;
            let d =
                (actuator_wrench(&s, &up, &p).unwrap().to_array(), actuator_wrench(&s, &dn, &p).unwrap().to_array());
            for r in 0..6 {
                fd[(r, j)] = (d.0[r] - d.1[r]) / (2.0 * h);
            }
        }
        let scale = a.amax().max(1.0);
        worst = worst.max((a - fd).amax() / scale);
    }
    let pass = worst <= JACOBIAN_REL_TOL;
    report(9, pass, format!("{JACOBIAN_STATES} states, worst relative error = {worst:.3e}"));
    pass
}

fn criterion_10_soft_cost_table() -> bool {
    let soft = SoftConstants::default();
    let mut worst = 0.0f64;
    let mut cells = Vec::new();
    for (chi, v, expected) in SOFT_TABLE {
        let got = soft.cost(v, chi);
        worst = worst.max((got / expected - 1.0).abs());
        cells.push(format!("({chi},{v}) = {got:.3e}"));
    }
    let pass = worst <= SOFT_REL_TOL;
    report(10, pass, format!("{}, worst relative error = {:.2} %", cells.join(", "), 100.0 * worst));
    pass
}

/// Smooth manoeuvre for the convergence study: cruise with tilting rotors,
/// unequal rotor speeds and deflected surfaces, no limits reached.
fn manoeuvre(dt: f64, t_end: f64, p: &VehicleParams) -> PlantState {
    let mut s = PlantState::hover(p);
    s.velocity = Vector3::new(20.0, 1.0, 0.5);
    s.attitude = Vector3::new(0.05, 0.03, 0.2);
    s.body_rates = Vector3::new(0.1, -0.05, 0.08);
    s.tilt = [1.0, 1.1, 0.9, 1.05];
    let cmd = ActuatorCommand {
        rotor_speed: [0.7, 0.75, 0.72, 0.68],
        surfaces: [0.1, -0.1, 0.05, 0.02],
        tilt: TiltCommand::Rate([0.1, -0.05, 0.08, 0.0]),
    };
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        s = integrate_rk4(&s, &cmd, dt, p).unwrap();
    }
    s
}

fn state_error(a: &PlantState, b: &PlantState) -> f64 {
    let d = [a.position - b.position, a.velocity - b.velocity, a.attitude - b.attitude, a.body_rates - b.body_rates];
    d.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

fn criterion_11_integrator() -> bool {
    let mut p = VehicleParams::default();
    p.aero.rho = 0.0;
    let idle = ActuatorCommand { rotor_speed: [0.0; 4], surfaces: [0.0; 4], tilt: TiltCommand::Rate([0.0; 4]) };
    let mut s = PlantState::hover(&p);
    for _ in 0..400 {
        s = integrate_rk4(&s, &idle, 1.0 / 400.0, &p).unwrap();
    }
    let fall_err = (s.velocity.z - p.gravity).abs();

    let p = VehicleParams::default();
    let t_end = 1.0;
    let reference = manoeuvre(1e-4, t_end, &p);
    let errors: Vec<f64> =
        [0.02, 0.01, 0.005].iter().map(|&dt| state_error(&manoeuvre(dt, t_end, &p), &reference)).collect();
    let order = (errors[1] / errors[2]).log2();
    let pass = fall_err <= FREE_FALL_TOL && order >= RK4_ORDER_MIN;
    report(
        11,
        pass,
        format!(
            "free-fall velocity error = {fall_err:.2e}, errors {:.3e} / {:.3e} / {:.3e}, observed order = {order:.3}",
            errors[0], errors[1], errors[2]
        ),
    );
    pass
}

fn criterion_12_performance_and_determinism() -> bool {
    let (first, wall) = accel_mpc();
    let (second, _) = fly(acceleration(), ControllerKind::Mpc, Some(25.0));
    let identical = csv_bytes(first) == csv_bytes(&second);
    let pass = *wall < ACCEL_RUNTIME_MAX && identical && first.log.len() == 10_000;
    report(
        12,
        pass,
        format!(
            "25 s acceleration run took {:.1} s wall, {} rows, byte-identical logs = {identical}",
            wall.as_secs_f64(),
            first.log.len()
        ),
    );
    pass
}

const CRITERIA: [(&str, fn() -> bool); 12] = [
    ("criterion_01_hover_trim", criterion_01_hover_trim),
    ("criterion_02_acceleration", criterion_02_acceleration),
    ("criterion_03_pitch_envelope", criterion_03_pitch_envelope),
    ("criterion_04_accel_decel", criterion_04_accel_decel),
    ("criterion_05_circle", criterion_05_circle),
    ("criterion_06_servo_jam", criterion_06_servo_jam),
    ("criterion_07_motor_out", criterion_07_motor_out),
    ("criterion_08_allocation_qp_oracle", criterion_08_allocation_qp_oracle),
    ("criterion_09_effectiveness_jacobian", criterion_09_effectiveness_jacobian),
    ("criterion_10_soft_cost_table", criterion_10_soft_cost_table),
    ("criterion_11_integrator", criterion_11_integrator),
    ("criterion_12_performance_and_determinism", criterion_12_performance_and_determinism),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (k, (name, check)) in CRITERIA.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let pass = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| {
            report(k as u32 + 1, false, "check panicked".into());
            false
        });
        if !pass {
            failed.push(*name);
        }
    }
    println!("\nacceptance: {} of {ran} passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
