//! Episodic navigation environment.
//!
//! Observations are built from a lidar sweep over the active layout plus the
//! goal in polar robot-frame coordinates and the previous command. Episodes
//! end on reaching the goal, colliding, or running out of steps.

mod curriculum;
mod preprocess;
mod reward;

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::{step_pose, wrap_angle, DimensionalConfig, Pose, VelocityCommand};
use crate::world::{Point, WorldError, WorldLayout};
use crate::{ensure, ConfigError};

pub use curriculum::{CurriculumSignal, CurriculumTracker, ADVANCE_RATE, WINDOW};
pub use preprocess::{preprocess, PreprocessConfig};
pub use reward::{reward, RewardConfig};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("distance {d} outside the pre-processing domain (must exceed c_d = {c_d})")]
    PreprocessDomain { d: f64, c_d: f64 },
    #[error("episode already terminated ({0:?})")]
    EpisodeOver(EpisodeStatus),
    #[error("command (v={v}, omega={omega}) exceeds the robot's bounds")]
    CommandOutOfBounds { v: f64, omega: f64 },
    #[error("curriculum update needs a terminal outcome")]
    NonTerminalOutcome,
    #[error("could not place a goal at least {0} m from the start")]
    GoalPlacement(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Running,
    Success,
    Collision,
    Timeout,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Success => "success",
            EpisodeStatus::Collision => "collision",
            EpisodeStatus::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub n_beams: usize,
    /// Field of view (rad), centred on the heading.
    pub fov: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: 540,
            fov: 1.5 * PI,
            d_min: 0.05,
            d_max: 30.0,
        }
    }
}

impl LidarConfig {
    /// Beam angle relative to the heading.
    pub fn beam_angle(&self, i: usize) -> f64 {
        if self.fov >= TAU - 1e-9 {
            -PI + (i as f64 + 0.5) * TAU / self.n_beams as f64
        } else {
            -self.fov / 2.0 + i as f64 * self.fov / (self.n_beams - 1) as f64
        }
    }

    pub fn beam_angles(&self) -> Vec<f64> {
        (0..self.n_beams).map(|i| self.beam_angle(i)).collect()
    }
}

/// Observation with raw range readings, as the sensor reports them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub scan: Vec<f64>,
    pub goal_dist: f64,
    pub goal_angle: f64,
    pub v: f64,
    pub omega: f64,
}

/// Network-facing observation: the scan has been pre-processed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scan: Vec<f64>,
    pub goal_dist: f64,
    pub goal_angle: f64,
    pub v: f64,
    pub omega: f64,
    /// Robot radius, present only for radius-conditioned networks.
    pub radius: Option<f64>,
}

impl RawObservation {
    pub fn process(&self, pp: &PreprocessConfig) -> Result<Observation, EnvError> {
        let scan = self
            .scan
            .iter()
            .map(|d| preprocess(*d, pp))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Observation {
            scan,
            goal_dist: self.goal_dist,
            goal_angle: self.goal_angle,
            v: self.v,
            omega: self.omega,
            radius: None,
        })
    }

    pub fn min_range(&self) -> f64 {
        self.scan.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Error type for controllers, which may wrap any component failure.
pub type ControlError = Box<dyn std::error::Error + Send + Sync>;

/// Anything that turns a raw observation into a velocity command.
pub trait Controller {
    fn act(&mut self, raw: &RawObservation) -> Result<VelocityCommand, ControlError>;
}

impl<F> Controller for F
where
    F: FnMut(&RawObservation) -> Result<VelocityCommand, ControlError>,
{
    fn act(&mut self, raw: &RawObservation) -> Result<VelocityCommand, ControlError> {
        self(raw)
    }
}

impl Controller for Box<dyn Controller + '_> {
    fn act(&mut self, raw: &RawObservation) -> Result<VelocityCommand, ControlError> {
        (**self).act(raw)
    }
}

/// Goal position as (distance, bearing) in the robot frame.
pub fn goal_polar(pose: &Pose, goal: Point) -> (f64, f64) {
    let d = goal.sub(pose.position());
    (d.norm(), wrap_angle(d.y.atan2(d.x) - pose.theta))
}

pub fn observe_raw(
    layout: &WorldLayout,
    pose: &Pose,
    goal: Point,
    cmd_prev: VelocityCommand,
    lidar: &LidarConfig,
) -> Result<RawObservation, EnvError> {
    let origin = pose.position();
    let scan = (0..lidar.n_beams)
        .map(|i| layout.cast_ray(origin, pose.theta + lidar.beam_angle(i), lidar.d_min, lidar.d_max))
        .collect::<Result<Vec<_>, _>>()?;
    let (goal_dist, goal_angle) = goal_polar(pose, goal);
    Ok(RawObservation {
        scan,
        goal_dist,
        goal_angle,
        v: cmd_prev.v,
        omega: cmd_prev.omega,
    })
}

pub fn observe(
    layout: &WorldLayout,
    pose: &Pose,
    goal: Point,
    cmd_prev: VelocityCommand,
    lidar: &LidarConfig,
    pp: &PreprocessConfig,
) -> Result<Observation, EnvError> {
    observe_raw(layout, pose, goal, cmd_prev, lidar)?.process(pp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub lidar: LidarConfig,
    pub preprocess: PreprocessConfig,
    pub reward: RewardConfig,
    /// Control cycle (s).
    pub dt: f64,
    pub max_steps: usize,
    pub goal_radius: f64,
    /// Minimum start-goal separation for random episodes (m).
    pub min_goal_distance: f64,
    /// Training layouts in curriculum order (built-in names or file paths).
    pub curriculum: Vec<String>,
    /// The meta robot.
    pub robot: DimensionalConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lidar: LidarConfig::default(),
            preprocess: PreprocessConfig::default(),
            reward: RewardConfig::default(),
            dt: 0.2,
            max_steps: 400,
            goal_radius: 0.3,
            min_goal_distance: 1.0,
            curriculum: ["env0", "env1", "env2", "env3"].map(String::from).to_vec(),
            robot: DimensionalConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.lidar;
        ensure(l.n_beams >= 2, "lidar.n_beams", "must be >= 2")?;
        ensure(l.fov > 0.0 && l.fov <= TAU, "lidar.fov", "must lie in (0, 2pi]")?;
        ensure(l.d_min >= 0.0, "lidar.d_min", "must be >= 0")?;
        ensure(l.d_max > l.d_min, "lidar.d_max", "must exceed d_min")?;
        if self.preprocess.enabled {
            ensure(
                self.preprocess.c_d < l.d_min,
                "preprocess.c_d",
                "must be below lidar.d_min",
            )?;
        }
        let r = &self.reward;
        ensure(r.r_success > 0.0, "reward.r_success", "must be > 0")?;
        ensure(r.r_collision < 0.0, "reward.r_collision", "must be < 0")?;
        ensure(r.c1 > 0.0, "reward.c1", "must be > 0")?;
        ensure(r.c2 >= 0.0, "reward.c2", "must be >= 0")?;
        ensure(self.dt > 0.0, "dt", "must be > 0")?;
        ensure(self.max_steps >= 1, "max_steps", "must be >= 1")?;
        ensure(self.goal_radius > 0.0, "goal_radius", "must be > 0")?;
        ensure(self.min_goal_distance >= 0.0, "min_goal_distance", "must be >= 0")?;
        ensure(!self.curriculum.is_empty(), "curriculum", "needs at least one layout")?;
        self.robot
            .validate()
            .map_err(|e| ConfigError::new("robot", e.to_string()))
    }

    pub fn load_curriculum(&self) -> Result<Vec<Arc<WorldLayout>>, WorldError> {
        self.curriculum
            .iter()
            .map(|n| WorldLayout::resolve(n).map(Arc::new))
            .collect()
    }
}

/// One row of an episode trace. Row 0 is the reset pose with a zero
/// command; row `k` holds the pose after step `k` and the command that
/// produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub reward: f64,
    pub status: EpisodeStatus,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x,y,theta,v,omega,reward,status")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.x,
            r.y,
            r.theta,
            r.v,
            r.omega,
            r.reward,
            r.status.as_str()
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub raw: RawObservation,
    pub observation: Observation,
    pub reward: f64,
    pub status: EpisodeStatus,
}

/// A single navigation episode over a shared layout.
#[derive(Clone, Debug)]
pub struct NavEnv {
    layout: Arc<WorldLayout>,
    cfg: EnvConfig,
    robot: DimensionalConfig,
    pose: Pose,
    goal: Point,
    last_cmd: VelocityCommand,
    steps: usize,
    status: EpisodeStatus,
    trace: Vec<TraceRow>,
}

impl NavEnv {
    pub fn new(layout: Arc<WorldLayout>, cfg: EnvConfig) -> Self {
        let robot = cfg.robot;
        Self {
            layout,
            cfg,
            robot,
            pose: Pose::default(),
            goal: Point::default(),
            last_cmd: VelocityCommand::ZERO,
            steps: 0,
            status: EpisodeStatus::Running,
            trace: Vec::new(),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Arc<WorldLayout> {
        &self.layout
    }

    /// Swaps the layout in place; the episode continues.
    pub fn set_layout(&mut self, layout: Arc<WorldLayout>) {
        self.layout = layout;
    }

    pub fn robot(&self) -> &DimensionalConfig {
        &self.robot
    }

    pub fn set_robot(&mut self, robot: DimensionalConfig) {
        self.robot = robot;
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn goal(&self) -> Point {
        self.goal
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn goal_distance(&self) -> f64 {
        self.goal.dist(self.pose.position())
    }

    /// Starts an episode from a given pose.
    pub fn reset_to(&mut self, pose: Pose, goal: Point) -> Result<RawObservation, EnvError> {
        self.pose = pose;
        self.goal = goal;
        self.last_cmd = VelocityCommand::ZERO;
        self.steps = 0;
        self.status = EpisodeStatus::Running;
        self.trace.clear();
        self.trace.push(TraceRow {
            t: 0.0,
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            v: 0.0,
            omega: 0.0,
            reward: 0.0,
            status: EpisodeStatus::Running,
        });
        self.raw_observation()
    }

    /// Random collision-free start, heading and goal.
    pub fn reset_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<RawObservation, EnvError> {
        let r = self.robot.radius;
        let start = self.layout.sample_free_point(r, rng)?;
        let theta = rng.gen_range(-PI..PI);
        let mut goal = None;
        for _ in 0..1000 {
            let g = self.layout.sample_free_point(r, rng)?;
            if g.dist(start) >= self.cfg.min_goal_distance {
                goal = Some(g);
                break;
            }
        }
        let goal = goal.ok_or(EnvError::GoalPlacement(self.cfg.min_goal_distance))?;
        self.reset_to(Pose::new(start.x, start.y, theta), goal)
    }

    pub fn raw_observation(&self) -> Result<RawObservation, EnvError> {
        observe_raw(&self.layout, &self.pose, self.goal, self.last_cmd, &self.cfg.lidar)
    }

    pub fn observation(&self) -> Result<Observation, EnvError> {
        self.raw_observation()?.process(&self.cfg.preprocess)
    }

    pub fn step(&mut self, cmd: VelocityCommand) -> Result<StepOutcome, EnvError> {
        if self.status.is_terminal() {
            return Err(EnvError::EpisodeOver(self.status));
        }
        if !self.robot.admits(cmd, 1e-9) {
            return Err(EnvError::CommandOutOfBounds {
                v: cmd.v,
                omega: cmd.omega,
            });
        }
        let dt = self.cfg.dt;
        let d_before = self.goal_distance();

        // sweep the arc so fast robots cannot tunnel through thin walls; the
        // pose always advances by the full commanded arc so traces replay
        // exactly
        let r = self.robot.radius;
        let n_sub = ((cmd.v.abs() * dt) / (0.25 * r)).ceil().max(1.0) as usize;
        let next = step_pose(self.pose, cmd, dt);
        let collided = (1..=n_sub).any(|k| {
            let p = if k == n_sub {
                next
            } else {
                step_pose(self.pose, cmd, dt * k as f64 / n_sub as f64)
            };
            self.layout.circle_collides(p.position(), r)
        });

        self.pose = next;
        self.last_cmd = cmd;
        self.steps += 1;
        let d_after = self.goal_distance();
        // collision wins a tie with the goal
        self.status = if collided {
            EpisodeStatus::Collision
        } else if d_after < self.cfg.goal_radius {
            EpisodeStatus::Success
        } else if self.steps >= self.cfg.max_steps {
            EpisodeStatus::Timeout
        } else {
            EpisodeStatus::Running
        };
        let r = reward(d_before, d_after, self.status, &self.cfg.reward);
        self.trace.push(TraceRow {
            t: self.steps as f64 * dt,
            x: next.x,
            y: next.y,
            theta: next.theta,
            v: cmd.v,
            omega: cmd.omega,
            reward: r,
            status: self.status,
        });
        let raw = self.raw_observation()?;
        let observation = raw.process(&self.cfg.preprocess)?;
        Ok(StepOutcome {
            raw,
            observation,
            reward: r,
            status: self.status,
        })
    }
}
