use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{NavEnv, TraceRow};
use crate::vehicle::{step_pose, wrap_angle, Pose, VelocityCommand};
use crate::world::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Layout active at the start of the episode.
    pub layout: String,
    pub controller: String,
    pub dt: f64,
    pub goal: Point,
}

/// Where and when a layout swap took effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapMarker {
    /// Number of steps taken when the swap fired.
    pub step: usize,
    pub layout: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub meta: TrajectoryMeta,
    pub rows: Vec<TraceRow>,
    pub swaps: Vec<SwapMarker>,
}

impl TrajectoryLog {
    pub fn from_env(env: &NavEnv, layout: &str, controller: &str, swaps: Vec<SwapMarker>) -> Self {
        let robot = env.robot();
        Self {
            meta: TrajectoryMeta {
                radius: robot.radius,
                v_max: robot.v_max,
                omega_max: robot.omega_max,
                layout: layout.to_string(),
                controller: controller.to_string(),
                dt: env.config().dt,
                goal: env.goal(),
            },
            rows: env.trace().to_vec(),
            swaps,
        }
    }

    pub fn start(&self) -> Option<Point> {
        self.rows.first().map(|r| Point::new(r.x, r.y))
    }

    /// Layout name active at each row.
    fn layout_at(&self, row: usize) -> &str {
        self.swaps
            .iter()
            .rev()
            .find(|s| s.step <= row)
            .map_or(self.meta.layout.as_str(), |s| s.layout.as_str())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y,theta,v,omega,reward,status,layout")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.t,
                r.x,
                r.y,
                r.theta,
                r.v,
                r.omega,
                r.reward,
                r.status.as_str(),
                self.layout_at(i)
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Largest pose deviation when each row is re-derived from the previous
    /// one with the logged command.
    pub fn replay_error(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| {
                let p = step_pose(
                    Pose::new(w[0].x, w[0].y, w[0].theta),
                    VelocityCommand::new(w[1].v, w[1].omega),
                    self.meta.dt,
                );
                (p.x - w[1].x)
                    .abs()
                    .max((p.y - w[1].y).abs())
                    .max(wrap_angle(p.theta - w[1].theta).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Rows must be time-ordered with a constant step.
    pub fn check_timing(&self) -> Result<(), String> {
        for (i, w) in self.rows.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if (dt - self.meta.dt).abs() > 1e-9 {
                return Err(format!("rows {i}..{}: step {dt} differs from {}", i + 1, self.meta.dt));
            }
        }
        Ok(())
    }
}
