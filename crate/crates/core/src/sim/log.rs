use nalgebra::Vector3;
use serde::Serialize;
use std::io::{self, Write};

use crate::model::Wrench;

/// One row per plant step, taken before the step with the commands that are
/// held over it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub t: f64,
    pub v_sp: Vector3<f64>,
    pub v: Vector3<f64>,
    pub position: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub attitude_sp: Vector3<f64>,
    pub body_rates: Vector3<f64>,
    pub airspeed: f64,
    pub tilt: [f64; 4],
    pub tilt_cmd: [f64; 4],
    pub thrust_sp: f64,
    pub rotor_cmd: [f64; 4],
    pub surfaces: [f64; 4],
    pub wrench_residual: Wrench,
    pub solver_status: &'static str,
    pub solver_iterations: usize,
    pub saturated: bool,
    /// Flight mode of the baseline controller; empty for the MPC.
    pub mode: &'static str,
    pub failure_active: bool,
    /// Whether the velocity controller ran at this step.
    pub velocity_tick: bool,
}

#[rustfmt::skip]
const HEADER: &[&str] = &[
    "t",
    "v_sp_x", "v_sp_y", "v_sp_z",
    "v_x", "v_y", "v_z",
    "pos_x", "pos_y", "pos_z",
    "roll", "pitch", "yaw",
    "roll_sp", "pitch_sp", "yaw_sp",
    "p", "q", "r",
    "airspeed",
    "tilt_1", "tilt_2", "tilt_3", "tilt_4",
    "tilt_cmd_1", "tilt_cmd_2", "tilt_cmd_3", "tilt_cmd_4",
    "thrust_sp",
    "rotor_1", "rotor_2", "rotor_3", "rotor_4",
    "aileron_left", "aileron_right", "elevator", "rudder",
    "res_fx", "res_fy", "res_fz", "res_mx", "res_my", "res_mz",
    "solver_status", "solver_iterations", "saturated", "mode", "failure_active", "velocity_tick",
];

/// Column names of the CSV log, in order.
pub fn csv_header() -> &'static [&'static str] {
    HEADER
}

/// Writes the log as CSV with a header row. Floats use the shortest
/// representation that round-trips, so identical logs give identical bytes.
pub fn write_csv<W: Write>(log: &[LogRecord], out: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(out);
    writeln!(w, "{}", HEADER.join(","))?;
    let mut row: Vec<String> = Vec::with_capacity(HEADER.len());
    for r in log {
        row.clear();
        row.push(r.t.to_string());
        for v in [&r.v_sp, &r.v, &r.position, &r.attitude, &r.attitude_sp, &r.body_rates] {
            row.extend(v.iter().map(f64::to_string));
        }
        row.push(r.airspeed.to_string());
        for a in [&r.tilt, &r.tilt_cmd] {
            row.extend(a.iter().map(f64::to_string));
        }
        row.push(r.thrust_sp.to_string());
        for a in [&r.rotor_cmd, &r.surfaces] {
            row.extend(a.iter().map(f64::to_string));
        }
        row.extend(r.wrench_residual.to_array().iter().map(f64::to_string));
        row.push(r.solver_status.to_string());
        row.push(r.solver_iterations.to_string());
        row.push(u8::from(r.saturated).to_string());
        row.push(r.mode.to_string());
        row.push(u8::from(r.failure_active).to_string());
        row.push(u8::from(r.velocity_tick).to_string());
        debug_assert_eq!(row.len(), HEADER.len());
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}
