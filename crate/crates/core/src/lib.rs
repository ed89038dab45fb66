//! Map-less navigation for circular robots of varying size.
//!
//! A simulated 2D room with lidar ([`world`], [`env`]), a soft actor-critic
//! trainer for a fixed-size meta robot ([`nets`], [`msl`]), and
//! dimension-variable skill transfer ([`dvst`]) that reuses the trained
//! controller on robots with a different radius and velocity bounds.
//! [`eval`] scores controllers and renders trajectories.

pub mod dvst;
pub mod env;
pub mod eval;
pub mod msl;
pub mod nets;
pub mod vehicle;
pub mod world;

use thiserror::Error;

pub use vehicle::{DimensionalConfig, Pose, VelocityCommand};
pub use world::{Point, WorldLayout};

/// A semantic config problem, located by its dotted field path.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn ensure(ok: bool, field: &str, message: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(field, message))
    }
}
