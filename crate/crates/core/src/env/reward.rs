use serde::{Deserialize, Serialize};

use super::EpisodeStatus;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub r_success: f64,
    pub r_collision: f64,
    /// Reward per metre of progress toward the goal.
    pub c1: f64,
    /// Per-step time penalty.
    pub c2: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_success: 20.0,
            r_collision: -20.0,
            c1: 10.0,
            c2: 0.05,
        }
    }
}

/// Sparse terminal reward, or dense progress minus time penalty.
pub fn reward(d_goal_before: f64, d_goal_after: f64, status: EpisodeStatus, cfg: &RewardConfig) -> f64 {
    match status {
        EpisodeStatus::Success => cfg.r_success,
        EpisodeStatus::Collision => cfg.r_collision,
        EpisodeStatus::Running | EpisodeStatus::Timeout => {
            cfg.c1 * (d_goal_before - d_goal_after) - cfg.c2
        }
    }
}
