use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_episode, EvalError, ScoreRecord, TrajectoryLog};
use crate::env::{ControlError, Controller, EnvConfig, NavEnv};
use crate::vehicle::{DimensionalConfig, Pose};
use crate::world::{Point, WorldLayout};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundVariant {
    pub v_max: f64,
    pub omega_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Robot radii (m), strictly increasing.
    pub radii: Vec<f64>,
    pub bounds: Vec<BoundVariant>,
    pub layout: String,
    pub start: Pose,
    pub goal: Point,
}

impl Default for SweepSpec {
    /// 0.20 to 0.75 m in 0.05 m steps through the gate room.
    fn default() -> Self {
        Self {
            radii: (0..12).map(|i| (20 + 5 * i) as f64 / 100.0).collect(),
            bounds: vec![BoundVariant {
                v_max: 0.5,
                omega_max: FRAC_PI_2,
            }],
            layout: "gate".into(),
            start: Pose::new(0.0, -1.5, FRAC_PI_2),
            goal: Point::new(0.0, 1.5),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidSweep(m.into()));
        if self.radii.is_empty() || self.bounds.is_empty() {
            return bad("needs at least one radius and one bound variant");
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("radii must be positive");
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return bad("radii must be strictly increasing");
        }
        if self.bounds.iter().any(|b| !(b.v_max > 0.0 && b.omega_max > 0.0)) {
            return bad("velocity bounds must be positive");
        }
        Ok(())
    }

    pub fn configs(&self) -> Result<Vec<DimensionalConfig>, EvalError> {
        let mut out = Vec::new();
        for b in &self.bounds {
            for r in &self.radii {
                out.push(
                    DimensionalConfig::new(*r, b.v_max, b.omega_max)
                        .map_err(|e| EvalError::InvalidSweep(e.to_string()))?,
                );
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub robot: DimensionalConfig,
    pub record: ScoreRecord,
    pub log: TrajectoryLog,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub layout: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "radius,v_max,omega_max,outcome,steps,score")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.robot.radius,
                r.robot.v_max,
                r.robot.omega_max,
                r.record.outcome.as_str(),
                r.record.steps,
                r.record.score
            )?;
        }
        Ok(())
    }

    pub fn logs(&self) -> Vec<TrajectoryLog> {
        self.rows.iter().map(|r| r.log.clone()).collect()
    }
}

pub type ControllerFactory<'f> = dyn FnMut(&DimensionalConfig) -> Result<Box<dyn Controller + 'f>, ControlError> + 'f;

/// One episode per (bounds, radius) pair from the spec's start pose, with
/// a fresh controller from `factory` for each robot.
pub fn run_sweep(
    spec: &SweepSpec,
    env_cfg: &EnvConfig,
    layout: Arc<WorldLayout>,
    factory: &mut ControllerFactory<'_>,
) -> Result<SweepReport, EvalError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for robot in spec.configs()? {
        let mut env = NavEnv::new(layout.clone(), env_cfg.clone());
        env.set_robot(robot);
        let mut ctl = factory(&robot).map_err(EvalError::Control)?;
        let id = format!("R={:.2}", robot.radius);
        let (record, log) = run_episode(&mut env, &mut ctl, spec.start, spec.goal, &[], &id)?;
        rows.push(SweepRow { robot, record, log });
    }
    Ok(SweepReport {
        layout: layout.name.clone(),
        rows,
    })
}
