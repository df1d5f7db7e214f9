//! Flight-control stack and closed-loop simulator for a four-rotor tiltrotor
//! VTOL with independently tilting rotors and conventional control surfaces.
//!
//! The pieces, bottom-up:
//! - [`model`]: plant physics (rotor and aerodynamic wrenches, 6-DOF + tilt dynamics, RK4).
//! - [`optim`]: box-constrained least squares and a multiple-shooting Gauss-Newton SQP.
//! - [`control`]: unified velocity MPC, attitude PID and the mode-switching baseline.
//! - [`allocation`]: incremental QP control allocation with failure accommodation.
//! - [`sim`]: the multi-rate closed-loop runtime, logging and metrics.
//! - [`scenario`]: the flight experiments and the scenario configuration file.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod control;
pub mod model;
pub mod optim;
pub mod scenario;
pub mod sim;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("TOML parse error at line {line}, key `{key}`: {message}")]
    Field { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}
