//! Scalar summaries of a run.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use std::fmt::Write as _;

use super::LogRecord;
use crate::model::frames::wrap_angle;

/// What to measure, usually derived from the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSpec {
    /// Forward speed for the settle time, m/s.
    pub settle_target: Option<f64>,
    pub settle_tol: f64,
    /// Velocity error bound for recovery after a failure, m/s.
    pub recovery_tol: f64,
    /// Roll and yaw error bound for attitude recovery, rad.
    pub attitude_recovery_tol: f64,
    /// Start of the circular phase and its radius.
    pub circle: Option<(f64, f64)>,
    /// Samples from this time on count as steady state, s after the start of
    /// the run or of the circular phase.
    pub steady_after: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            settle_target: None,
            settle_tol: 0.5,
            recovery_tol: 1.0,
            attitude_recovery_tol: 5f64.to_radians(),
            circle: None,
            steady_after: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub duration: f64,
    /// Velocity RMSE per axis over the whole run, m/s.
    pub rmse_v: [f64; 3],
    pub max_abs_pitch: f64,
    pub max_abs_roll: f64,
    pub max_abs_vz: f64,
    pub max_horizontal_speed: f64,
    /// Largest ‖v‖ once steady, m/s.
    pub max_speed_steady: f64,
    /// Mean rotor command once steady.
    pub mean_rotor_cmd_steady: f64,
    pub min_tilt_cmd: f64,
    pub max_mean_tilt: f64,
    pub final_mean_tilt: f64,
    pub saturated_fraction: f64,
    /// Time v_x settles within tolerance of the target for good, s.
    pub settle_time: Option<f64>,
    pub failure_time: Option<f64>,
    /// Time from the failure until the velocity error stays below tolerance,
    /// s; infinite if it never does.
    pub recovery_time: Option<f64>,
    pub attitude_recovery_time: Option<f64>,
    pub saturated_fraction_after_failure: Option<f64>,
    /// Largest distance from the best-fit circle centre minus the radius, m.
    pub circle_radius_error: Option<f64>,
    /// RMSE of the horizontal speed against the setpoint speed over the circular phase, m/s.
    pub circle_speed_rmse: Option<f64>,
    pub circle_mean_roll: Option<f64>,
    pub mpc_solves: usize,
    pub mpc_max_iterations: usize,
    pub mpc_not_converged: usize,
}

/// First time after which `ok` holds for every later sample.
fn settled_from<'a>(
    log: impl DoubleEndedIterator<Item = &'a LogRecord>,
    ok: impl Fn(&LogRecord) -> bool,
) -> Option<f64> {
    let mut t = None;
    for r in log.rev() {
        if !ok(r) {
            break;
        }
        t = Some(r.t);
    }
    t
}

/// Algebraic circle fit; returns the centre.
fn fit_circle(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for &(x, y) in points {
        let row = Vector3::new(x, y, 1.0);
        m += row * row.transpose();
        rhs -= row * (x * x + y * y);
    }
    let sol = m.lu().solve(&rhs)?;
    Some((-sol.x / 2.0, -sol.y / 2.0))
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn metrics_from_log(log: &[LogRecord], spec: &MetricsSpec) -> Metrics {
    let n = log.len().max(1) as f64;
    let duration = log.last().map_or(0.0, |r| r.t);
    let rmse_v = [0, 1, 2].map(|i| rms(log.iter().map(|r| r.v[i] - r.v_sp[i])));
    let max = |f: &dyn Fn(&LogRecord) -> f64| log.iter().map(f).fold(0.0_f64, f64::max);
    let mean_tilt = |r: &LogRecord| r.tilt.iter().sum::<f64>() / 4.0;

    let steady: Vec<&LogRecord> = log.iter().filter(|r| r.t >= spec.steady_after).collect();
    let mean_rotor_cmd_steady = if steady.is_empty() {
        0.0
    } else {
        steady.iter().map(|r| r.rotor_cmd.iter().sum::<f64>() / 4.0).sum::<f64>() / steady.len() as f64
    };

    let settle_time =
        spec.settle_target.and_then(|target| settled_from(log.iter(), |r| (r.v.x - target).abs() < spec.settle_tol));

    let failure_time = log.iter().find(|r| r.failure_active).map(|r| r.t);
    let after: Vec<&LogRecord> = failure_time.map_or(Vec::new(), |tf| log.iter().filter(|r| r.t >= tf).collect());
    let recover = |ok: &dyn Fn(&LogRecord) -> bool| {
        failure_time.map(|tf| settled_from(after.iter().copied(), ok).map_or(f64::INFINITY, |t| t - tf))
    };
    let recovery_time = recover(&|r| (r.v - r.v_sp).norm() < spec.recovery_tol);
    let attitude_recovery_time = recover(&|r| {
        let roll = (r.attitude.x - r.attitude_sp.x).abs();
        let yaw = wrap_angle(r.attitude.z - r.attitude_sp.z).abs();
        roll.max(yaw) < spec.attitude_recovery_tol
    });
    let saturated_fraction_after_failure =
        failure_time.map(|_| after.iter().filter(|r| r.saturated).count() as f64 / after.len().max(1) as f64);

    let (mut circle_radius_error, mut circle_speed_rmse, mut circle_mean_roll) = (None, None, None);
    if let Some((start, radius)) = spec.circle {
        let phase: Vec<&LogRecord> = log.iter().filter(|r| r.t >= start).collect();
        if phase.len() >= 3 {
            let pts: Vec<(f64, f64)> = phase.iter().map(|r| (r.position.x, r.position.y)).collect();
            circle_radius_error = fit_circle(&pts)
                .map(|(cx, cy)| pts.iter().map(|(x, y)| ((x - cx).hypot(y - cy) - radius).abs()).fold(0.0, f64::max));
            circle_speed_rmse = Some(rms(phase.iter().map(|r| r.v.xy().norm() - r.v_sp.xy().norm())));
            let late: Vec<f64> =
                phase.iter().filter(|r| r.t >= start + spec.steady_after).map(|r| r.attitude.x).collect();
            if !late.is_empty() {
                circle_mean_roll = Some(late.iter().sum::<f64>() / late.len() as f64);
            }
        }
    }

    let solves: Vec<&LogRecord> = log.iter().filter(|r| r.velocity_tick && r.mode.is_empty()).collect();
    let mpc_solves = solves.len();
    let mpc_max_iterations = solves.iter().map(|r| r.solver_iterations).max().unwrap_or(0);
    let mpc_not_converged = solves.iter().filter(|r| r.solver_status != "converged").count();

    Metrics {
        duration,
        rmse_v,
        max_abs_pitch: max(&|r| r.attitude.y.abs()),
        max_abs_roll: max(&|r| r.attitude.x.abs()),
        max_abs_vz: max(&|r| r.v.z.abs()),
        max_horizontal_speed: max(&|r| r.v.xy().norm()),
        max_speed_steady: steady.iter().map(|r| r.v.norm()).fold(0.0, f64::max),
        mean_rotor_cmd_steady,
        min_tilt_cmd: log.iter().flat_map(|r| r.tilt_cmd).fold(f64::INFINITY, f64::min),
        max_mean_tilt: log.iter().map(mean_tilt).fold(f64::NEG_INFINITY, f64::max),
        final_mean_tilt: log.last().map_or(0.0, mean_tilt),
        saturated_fraction: log.iter().filter(|r| r.saturated).count() as f64 / n,
        settle_time,
        failure_time,
        recovery_time,
        attitude_recovery_time,
        saturated_fraction_after_failure,
        circle_radius_error,
        circle_speed_rmse,
        circle_mean_roll,
        mpc_solves,
        mpc_max_iterations,
        mpc_not_converged,
    }
}

impl Metrics {
    /// Flat `key = value` text, angles in degrees. Absent values read `n/a`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let deg = |v: f64| v.to_degrees();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("duration_s", format!("{:.6}", self.duration));
        kv("rmse_vx", format!("{:.6}", self.rmse_v[0]));
        kv("rmse_vy", format!("{:.6}", self.rmse_v[1]));
        kv("rmse_vz", format!("{:.6}", self.rmse_v[2]));
        kv("max_abs_pitch_deg", format!("{:.6}", deg(self.max_abs_pitch)));
        kv("max_abs_roll_deg", format!("{:.6}", deg(self.max_abs_roll)));
        kv("max_abs_vz", format!("{:.6}", self.max_abs_vz));
        kv("max_horizontal_speed", format!("{:.6}", self.max_horizontal_speed));
        kv("max_speed_steady", format!("{:.6}", self.max_speed_steady));
        kv("mean_rotor_cmd_steady", format!("{:.6}", self.mean_rotor_cmd_steady));
        kv("min_tilt_cmd_deg", format!("{:.6}", deg(self.min_tilt_cmd)));
        kv("max_mean_tilt_deg", format!("{:.6}", deg(self.max_mean_tilt)));
        kv("final_mean_tilt_deg", format!("{:.6}", deg(self.final_mean_tilt)));
        kv("saturated_fraction", format!("{:.6}", self.saturated_fraction));
        kv("settle_time_s", opt(self.settle_time));
        kv("failure_time_s", opt(self.failure_time));
        kv("recovery_time_s", opt(self.recovery_time));
        kv("attitude_recovery_time_s", opt(self.attitude_recovery_time));
        kv("saturated_fraction_after_failure", opt(self.saturated_fraction_after_failure));
        kv("circle_radius_error_m", opt(self.circle_radius_error));
        kv("circle_speed_rmse", opt(self.circle_speed_rmse));
        kv("circle_mean_roll_deg", opt(self.circle_mean_roll.map(deg)));
        kv("mpc_solves", self.mpc_solves.to_string());
        kv("mpc_max_iterations", self.mpc_max_iterations.to_string());
        kv("mpc_not_converged", self.mpc_not_converged.to_string());
        s
    }
}
