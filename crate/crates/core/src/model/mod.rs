//! Vehicle physics: parameters, airdata, rotor and aerodynamic wrenches,
//! rigid-body derivative and time integration.

pub mod aero;
pub mod dynamics;
pub mod frames;
pub mod params;
pub mod rotor;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Sub};

pub use aero::{aero_effectiveness, aero_wrench, airdata, AirData, Surfaces};
pub use dynamics::{integrate_rk4, total_derivative, ActuatorCommand, PlantState, StateDerivative, TiltCommand};
pub use params::{AeroParams, VehicleParams};
pub use rotor::{gravity_wrench, rotor_wrench};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("pitch {:.2} deg is within 1 deg of the Euler singularity", .0.to_degrees())]
    GimbalProximity(f64),
    #[error("integration step must be positive, got {0}")]
    InvalidStep(f64),
}

/// Body-frame force (N) and moment (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(force: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self { force, moment }
    }

    pub fn from_array(v: &[f64; 6]) -> Self {
        Self { force: Vector3::new(v[0], v[1], v[2]), moment: Vector3::new(v[3], v[4], v[5]) }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.force.x, self.force.y, self.force.z, self.moment.x, self.moment.y, self.moment.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, o: Wrench) -> Wrench {
        Wrench { force: self.force + o.force, moment: self.moment + o.moment }
    }
}

impl AddAssign for Wrench {
    fn add_assign(&mut self, o: Wrench) {
        self.force += o.force;
        self.moment += o.moment;
    }
}

impl Sub for Wrench {
    type Output = Wrench;
    fn sub(self, o: Wrench) -> Wrench {
        Wrench { force: self.force - o.force, moment: self.moment - o.moment }
    }
}

impl Mul<f64> for Wrench {
    type Output = Wrench;
    fn mul(self, k: f64) -> Wrench {
        Wrench { force: self.force * k, moment: self.moment * k }
    }
}
