use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::env::{LidarConfig, RawObservation};
use crate::vehicle::{DimensionalConfig, VelocityCommand};
use crate::{ensure, ConfigError};

/// Goal-seeking proportional controller used to seed the replay buffer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidBootstrap {
    pub heading_gain: f64,
    pub linear_gain: f64,
    /// Stop when a beam in the front sector reads less than this (m).
    pub stop_distance: f64,
    /// Half-angle of the front sector checked by the stop rule (rad).
    pub front_half_angle: f64,
}

impl Default for PidBootstrap {
    fn default() -> Self {
        Self {
            heading_gain: 1.5,
            linear_gain: 0.5,
            stop_distance: 0.35,
            front_half_angle: FRAC_PI_4,
        }
    }
}

impl PidBootstrap {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.heading_gain > 0.0, "pid.heading_gain", "must be positive")?;
        ensure(self.linear_gain > 0.0, "pid.linear_gain", "must be positive")?;
        ensure(self.stop_distance >= 0.0, "pid.stop_distance", "must be non-negative")?;
        ensure(self.front_half_angle > 0.0, "pid.front_half_angle", "must be positive")
    }
}

/// Turns toward the goal, slows with heading error (zero beyond a right
/// angle) and stops in front of close obstacles.
pub fn pid_action(
    obs: &RawObservation,
    cfg: &PidBootstrap,
    lidar: &LidarConfig,
    bounds: &DimensionalConfig,
) -> VelocityCommand {
    let omega = (cfg.heading_gain * obs.goal_angle).clamp(-bounds.omega_max, bounds.omega_max);
    let mut v = (cfg.linear_gain * obs.goal_dist).clamp(0.0, bounds.v_max) * obs.goal_angle.cos().max(0.0);
    let blocked = obs
        .scan
        .iter()
        .enumerate()
        .any(|(i, d)| lidar.beam_angle(i).abs() <= cfg.front_half_angle && *d < cfg.stop_distance);
    if blocked {
        v = 0.0;
    }
    VelocityCommand::new(v.clamp(0.0, bounds.v_max), omega)
}
