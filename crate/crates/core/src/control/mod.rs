//! Velocity and attitude controllers.

pub mod attitude;
pub mod baseline;
pub mod cost;
pub mod mpc;

pub use attitude::{attitude_step, AttitudeGains};
pub use baseline::{BaselineConfig, BaselineController, BaselineOutput, FlightMode};
pub use cost::{mpc_cost, mpc_terminal_cost, MpcWeights, SoftConstants};
pub use mpc::{
    mpc_predict, mpc_predict_with, tilt_yaw_moment, ActuatorHealth, MpcConfig, MpcController, MpcInput, MpcOutput,
    MpcState,
};
