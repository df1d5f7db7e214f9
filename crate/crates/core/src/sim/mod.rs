//! Multi-rate closed loop: plant at 400 Hz, attitude loop and allocation at
//! 250 Hz, velocity controller at 100 Hz by default.
//!
//! Every loop ticks at t = 0 and then whenever its own clock passes a period
//! boundary on the plant grid, so plant step k runs a loop of rate f when
//! (k·f) mod f_plant < f. Commands are held between ticks.

pub mod log;
pub mod metrics;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    allocate, effectiveness_matrix, thrust_force, ActiveFailure, AllocatorState, FailureMonitor, NUM_ACTUATORS,
};
use crate::control::{attitude_step, ActuatorHealth, BaselineController, MpcController, MpcState};
use crate::model::{integrate_rk4, ActuatorCommand, ModelError, TiltCommand, Wrench};
use crate::optim::SolveStatus;
use crate::scenario::ScenarioConfig;

pub use log::{csv_header, write_csv, LogRecord};
pub use metrics::{metrics_from_log, Metrics, MetricsSpec};

/// Rotor speed used in place of smaller ones when linearizing for
/// allocation; the thrust derivative 2·c_F·ω vanishes at ω = 0, which would
/// leave a stopped rotor unable to spin up.
pub const MIN_LINEARIZATION_SPEED: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "mpc")]
    Mpc,
    #[serde(rename = "pid")]
    BaselinePid,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Mpc => "mpc",
            ControllerKind::BaselinePid => "pid",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mpc" => Ok(ControllerKind::Mpc),
            "pid" => Ok(ControllerKind::BaselinePid),
            other => Err(format!("unknown controller '{other}', expected mpc or pid")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub plant_hz: u32,
    pub attitude_hz: u32,
    pub velocity_hz: u32,
    /// Run length, s.
    pub duration: f64,
    /// Seed for randomized studies. The nominal loop draws no random numbers.
    pub seed: u64,
    pub controller: ControllerKind,
    /// Hand over to the baseline controller when the MPC cannot produce a usable solution.
    pub fallback: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            plant_hz: 400,
            attitude_hz: 250,
            velocity_hz: 100,
            duration: 10.0,
            seed: 0,
            controller: ControllerKind::Mpc,
            fallback: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.plant_hz >= self.attitude_hz && self.attitude_hz >= self.velocity_hz && self.velocity_hz > 0) {
            return Err("rates must satisfy plant_hz >= attitude_hz >= velocity_hz > 0".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err("duration must be positive".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration * self.plant_hz as f64).round() as usize
    }
}

/// Whether a loop of rate `hz` runs at plant step `k`.
pub fn ticks_at(k: usize, hz: u32, plant_hz: u32) -> bool {
    (k as u64 * hz as u64) % (plant_hz as u64) < (hz as u64)
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimFault {
    #[error("plant fault at t = {t:.4} s: {source}")]
    Plant { t: f64, source: ModelError },
    #[error("velocity controller failed at t = {t:.4} s with status {status:?} and no fallback")]
    Solver { t: f64, status: SolveStatus },
    #[error("allocation failed at t = {t:.4} s: {message}")]
    Allocation { t: f64, message: String },
}

impl SimFault {
    pub fn time(&self) -> f64 {
        match self {
            SimFault::Plant { t, .. } | SimFault::Solver { t, .. } | SimFault::Allocation { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: Vec<LogRecord>,
    pub metrics: Metrics,
    /// Set if the run was cut short; the log covers the steps before it.
    pub fault: Option<SimFault>,
    /// Velocity ticks flown by the baseline after an MPC failure.
    pub fallback_ticks: usize,
}

/// Velocity-loop output held until the next tick.
#[derive(Debug, Clone, Copy)]
struct OuterCommand {
    psi_sp: Vector3<f64>,
    thrust_sp: f64,
    tilt_target: [f64; 4],
    status: &'static str,
    iterations: usize,
    mode: &'static str,
}

/// Metrics request matching a scenario's experiment.
pub fn metrics_spec(scenario: &ScenarioConfig) -> MetricsSpec {
    let k = &scenario.kind;
    MetricsSpec {
        settle_target: k.cruise_speed(),
        circle: k.circle_start().zip(k.circle_radius()),
        ..MetricsSpec::default()
    }
}

fn active_or_nominal(f: &Option<ActiveFailure>) -> ActiveFailure {
    f.unwrap_or_else(ActiveFailure::nominal)
}

/// Flies `scenario` under `cfg`. Deterministic: equal inputs give equal logs.
pub fn run(scenario: &ScenarioConfig, cfg: &SimConfig) -> SimOutput {
    let p = &scenario.vehicle;
    let dt = 1.0 / cfg.plant_hz as f64;
    let velocity_dt = 1.0 / cfg.velocity_hz as f64;

    let mut mpc_cfg = scenario.mpc.clone();
    // The MPC's step matches the rate it runs at.
    mpc_cfg.dt = velocity_dt;
    let mut mpc = MpcController::new(mpc_cfg, scenario.attitude, p.clone());
    let mut baseline = BaselineController::new(scenario.baseline, p.clone(), velocity_dt);
    let mut monitor = FailureMonitor::new(scenario.failures.clone());

    let mut state = scenario.initial_plant_state();
    let mut outer = OuterCommand {
        psi_sp: Vector3::new(0.0, 0.0, state.attitude.z),
        thrust_sp: p.weight(),
        tilt_target: state.tilt,
        status: "",
        iterations: 0,
        mode: "",
    };
    let mut cmd = state.actuators;
    let mut alloc = match AllocatorState::from_plant(&state, p) {
        Ok(a) => a,
        Err(source) => {
            let fault = SimFault::Plant { t: 0.0, source };
            let spec = metrics_spec(scenario);
            return SimOutput {
                log: Vec::new(),
                metrics: metrics_from_log(&[], &spec),
                fault: Some(fault),
                fallback_ticks: 0,
            };
        }
    };
    let mut residual = Wrench::zero();
    let mut saturated = false;
    let mut att_prev_rate = state.body_rates;
    let mut mpc_prev_rate = state.body_rates;
    let mut fallback_ticks = 0;
    let mut failure = None;

    let steps = cfg.steps();
    let mut log = Vec::with_capacity(steps);
    let mut fault = None;

    for k in 0..steps {
        let t = k as f64 * dt;
        if monitor.update(t, &state, p) || failure.is_none() {
            failure = monitor.active();
        }
        let v_sp = scenario.velocity_setpoint(t);

        let velocity_tick = ticks_at(k, cfg.velocity_hz, cfg.plant_hz);
        if velocity_tick {
            let use_mpc = cfg.controller == ControllerKind::Mpc;
            let mut fall_back = !use_mpc;
            if use_mpc {
                let x_now = MpcState {
                    v: state.velocity,
                    chi: state.tilt,
                    psi: state.attitude,
                    psi_dot: state.body_rates,
                    psi_dot_prev: mpc_prev_rate,
                };
                if let Some(f) = &failure {
                    let rotor_ub = [f.ub[0], f.ub[1], f.ub[2], f.ub[3]];
                    mpc.set_health(ActuatorHealth::degraded(p, rotor_ub, f.tilt_lb, f.tilt_ub, f.tilt_jam));
                }
                let out = mpc.step(&x_now, &v_sp);
                mpc_prev_rate = state.body_rates;
                if out.status.is_usable() {
                    outer = OuterCommand {
                        psi_sp: out.psi_sp,
                        thrust_sp: out.thrust_sp,
                        tilt_target: out.tilt_target,
                        status: out.status.as_str(),
                        iterations: out.iterations,
                        mode: "",
                    };
                } else if cfg.fallback {
                    fall_back = true;
                    fallback_ticks += 1;
                } else if out.status == SolveStatus::NumericFail {
                    fault = Some(SimFault::Solver { t, status: out.status });
                    break;
                } else {
                    // Infeasible without fallback: fly the controller's safe hold.
                    outer = OuterCommand {
                        psi_sp: out.psi_sp,
                        thrust_sp: out.thrust_sp,
                        tilt_target: out.tilt_target,
                        status: out.status.as_str(),
                        iterations: out.iterations,
                        mode: "",
                    };
                }
            }
            if fall_back {
                let out = baseline.step(&v_sp, &state);
                outer = OuterCommand {
                    psi_sp: out.psi_sp,
                    thrust_sp: out.thrust_sp,
                    tilt_target: out.tilt_target,
                    status: if use_mpc { "fallback" } else { "" },
                    iterations: 0,
                    mode: out.mode.as_str(),
                };
            }
        }

        let f = active_or_nominal(&failure);
        let tilt_cmd: [f64; 4] = std::array::from_fn(|i| f.tilt_command(i, p.clamp_tilt(outer.tilt_target[i])));

        if ticks_at(k, cfg.attitude_hz, cfg.plant_hz) {
            let torque = attitude_step(&outer.psi_sp, &state, &scenario.attitude, &att_prev_rate);
            att_prev_rate = state.body_rates;
            let w_sp = Wrench::new(thrust_force(outer.thrust_sp, &state.tilt), torque);
            let result = AllocatorState::at(&state, alloc.u_trim, p).and_then(|st| {
                let mut lin = st.u_trim;
                for w in &mut lin[..4] {
                    *w = w.max(MIN_LINEARIZATION_SPEED);
                }
                Ok((st, effectiveness_matrix(&state, &lin, p)))
            });
            let (st, a) = match result {
                Ok(v) => v,
                Err(source) => {
                    fault = Some(SimFault::Plant { t, source });
                    break;
                }
            };
            match allocate(&w_sp, &st, &a, failure.as_ref()) {
                Ok(out) => {
                    alloc = AllocatorState { u_trim: out.u_sp, w_prev: st.w_prev };
                    residual = out.residual;
                    saturated = out.saturated;
                }
                Err(e) => {
                    fault = Some(SimFault::Allocation { t, message: e.to_string() });
                    break;
                }
            }
        }

        // A failure that fires between allocation ticks applies at once.
        let mut u = alloc.u_trim;
        for i in 0..NUM_ACTUATORS {
            u[i] = u[i].clamp(f.lb[i], f.ub[i]);
        }
        let rotor_cmd = [u[0], u[1], u[2], u[3]];
        cmd = ActuatorCommand {
            rotor_speed: motor_lag(&cmd.rotor_speed, &rotor_cmd, p.motor_time_constant, dt),
            surfaces: [u[4], u[5], u[6], u[7]],
            tilt: TiltCommand::Target(tilt_cmd),
        };

        log.push(LogRecord {
            t,
            v_sp,
            v: state.velocity,
            position: state.position,
            attitude: state.attitude,
            attitude_sp: outer.psi_sp,
            body_rates: state.body_rates,
            airspeed: state.airdata(&Vector3::zeros(), p).va,
            tilt: state.tilt,
            tilt_cmd,
            thrust_sp: outer.thrust_sp,
            rotor_cmd,
            surfaces: cmd.surfaces,
            wrench_residual: residual,
            solver_status: outer.status,
            solver_iterations: outer.iterations,
            saturated,
            mode: outer.mode,
            failure_active: failure.is_some(),
            velocity_tick,
        });

        match integrate_rk4(&state, &cmd, dt, p) {
            Ok(next) => state = next,
            Err(source) => {
                fault = Some(SimFault::Plant { t, source });
                break;
            }
        }
    }

    let metrics = metrics_from_log(&log, &metrics_spec(scenario));
    SimOutput { log, metrics, fault, fallback_ticks }
}

/// First-order rotor spin-up; instantaneous when `tau` is zero.
fn motor_lag(applied: &[f64; 4], cmd: &[f64; 4], tau: f64, dt: f64) -> [f64; 4] {
    if tau <= 0.0 {
        return *cmd;
    }
    let a = 1.0 - (-dt / tau).exp();
    std::array::from_fn(|i| applied[i] + a * (cmd[i] - applied[i]))
}
