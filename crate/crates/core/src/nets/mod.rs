//! Small differentiable networks for soft actor-critic.
//!
//! A reverse-mode [`tape`] over 2-D matrices, a scan encoder (strided 1-D
//! convolutions or sector pooling) followed by dense layers, a
//! squashed-Gaussian policy head and a scalar critic head.

mod adam;
mod io;
mod model;
pub mod tape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::VelocityCommand;

pub use adam::{Adam, AdamState};
pub use io::{load_network, load_weights, save_weights, weights_from_bytes, weights_to_bytes, WEIGHTS_FORMAT};
pub use model::{
    critic_forward, critic_forward_batch, forward, policy_forward, policy_forward_batch, policy_heads, squash_sample,
    Architecture, ConvLayer, FeatureEncoder, NetConfig, NetKind, NetworkParams, PolicyMode, PolicyOutput, Role,
    ScanEncoder, Squashed, ACTION_DIM,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("loss must be a 1x1 matrix, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("normalised action component {0} outside [-1, 1]")]
    ActionOutOfRange(f64),
    #[error("architecture mismatch at tensor {tensor}: expected {expected}, found {found}")]
    ArchMismatch {
        tensor: String,
        expected: String,
        found: String,
    },
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("tensor {0} holds non-finite values")]
    NonFinite(String),
    #[error("invalid action map: {0}")]
    InvalidActionMap(String),
    #[error("weights file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Affine map between normalised actions in [-1, 1]^2 and velocity commands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionMap {
    pub v_lo: f64,
    pub v_hi: f64,
    pub omega_max: f64,
}

/// Rounding slack when checking that a normalised value lies in [-1, 1].
const RANGE_SLACK: f64 = 1e-12;

impl ActionMap {
    pub fn new(v_lo: f64, v_hi: f64, omega_max: f64) -> Result<Self, NetError> {
        if !(v_lo < v_hi) || !(omega_max > 0.0) || !v_hi.is_finite() || !omega_max.is_finite() {
            return Err(NetError::InvalidActionMap(format!(
                "need v_lo < v_hi and omega_max > 0 (got {v_lo}, {v_hi}, {omega_max})"
            )));
        }
        Ok(Self { v_lo, v_hi, omega_max })
    }

    /// Forward motion only, over the robot's full velocity range.
    pub fn for_robot(robot: &crate::DimensionalConfig) -> Result<Self, NetError> {
        Self::new(0.0, robot.v_max, robot.omega_max)
    }

    pub fn denormalize(&self, a: [f64; 2]) -> Result<VelocityCommand, NetError> {
        for x in a {
            if !(x.abs() <= 1.0 + RANGE_SLACK) {
                return Err(NetError::ActionOutOfRange(x));
            }
        }
        let [a0, a1] = a.map(|x| x.clamp(-1.0, 1.0));
        Ok(VelocityCommand::new(
            self.v_lo + (a0 + 1.0) * 0.5 * (self.v_hi - self.v_lo),
            a1 * self.omega_max,
        ))
    }

    pub fn normalize(&self, cmd: VelocityCommand) -> Result<[f64; 2], NetError> {
        let a = [
            2.0 * (cmd.v - self.v_lo) / (self.v_hi - self.v_lo) - 1.0,
            cmd.omega / self.omega_max,
        ];
        for x in a {
            if !(x.abs() <= 1.0 + RANGE_SLACK) {
                return Err(NetError::ActionOutOfRange(x));
            }
        }
        Ok(a.map(|x| x.clamp(-1.0, 1.0)))
    }
}
