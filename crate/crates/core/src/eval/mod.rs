//! Evaluation: episode scoring, the four-goal protocol, dimension sweeps,
//! mid-episode layout swaps, trajectory logs and SVG plots.

mod controllers;
mod log;
mod plot;
mod sweep;

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dvst::TransferError;
use crate::env::{ControlError, Controller, EnvConfig, EnvError, EpisodeStatus, NavEnv};
use crate::vehicle::Pose;
use crate::world::{Point, WorldError, WorldLayout};

pub use controllers::{ReactiveMeta, Straight};
pub use log::{SwapMarker, TrajectoryLog, TrajectoryMeta};
pub use plot::emit_plot;
pub use sweep::{run_sweep, BoundVariant, SweepReport, SweepRow, SweepSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot score a non-terminal episode")]
    NonTerminal,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("controller failed: {0}")]
    Control(ControlError),
    #[error("nothing to plot")]
    EmptyLogs,
    #[error("log drawn on layout {found} cannot be plotted over {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("layout {0} has no goal points")]
    NoGoals(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Outcome and score of one finished episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub outcome: EpisodeStatus,
    pub steps: usize,
    pub score: f64,
}

impl ScoreRecord {
    pub fn new(outcome: EpisodeStatus, steps: usize) -> Result<Self, EvalError> {
        Ok(Self {
            outcome,
            steps,
            score: score(outcome, steps)?,
        })
    }
}

/// -2 for a crash or timeout regardless of timing, `2 - 0.001 * steps` for
/// a success, so early crashes are never rewarded.
pub fn score(outcome: EpisodeStatus, steps: usize) -> Result<f64, EvalError> {
    match outcome {
        EpisodeStatus::Running => Err(EvalError::NonTerminal),
        EpisodeStatus::Collision | EpisodeStatus::Timeout => Ok(-2.0),
        EpisodeStatus::Success => Ok(2.0 - 0.001 * steps as f64),
    }
}

/// Position-triggered layout swap for a running episode.
#[derive(Clone, Debug)]
pub struct LayoutSwap {
    /// Fires once when the robot centre comes within `within` of `at`.
    pub at: Point,
    pub within: f64,
    pub layout: Arc<WorldLayout>,
}

/// Runs one episode from `start` until it terminates, applying swaps as
/// their triggers fire. The controller sees observations of the layout that
/// is active after any swap.
pub fn run_episode(
    env: &mut NavEnv,
    controller: &mut dyn Controller,
    start: Pose,
    goal: Point,
    swaps: &[LayoutSwap],
    controller_id: &str,
) -> Result<(ScoreRecord, TrajectoryLog), EvalError> {
    let mut raw = env.reset_to(start, goal)?;
    let mut fired = vec![false; swaps.len()];
    let mut markers = Vec::new();
    let initial_layout = env.layout().name.clone();
    loop {
        let cmd = controller.act(&raw).map_err(EvalError::Control)?;
        let out = env.step(cmd)?;
        raw = out.raw;
        if out.status.is_terminal() {
            break;
        }
        let pos = env.pose().position();
        let mut swapped = false;
        for (i, s) in swaps.iter().enumerate() {
            if !fired[i] && pos.dist(s.at) <= s.within {
                fired[i] = true;
                env.set_layout(s.layout.clone());
                markers.push(SwapMarker {
                    step: env.steps(),
                    layout: s.layout.name.clone(),
                    x: pos.x,
                    y: pos.y,
                });
                swapped = true;
            }
        }
        if swapped {
            raw = env.raw_observation()?;
        }
    }
    let record = ScoreRecord::new(env.status(), env.steps())?;
    let log = TrajectoryLog::from_env(env, &initial_layout, controller_id, markers);
    Ok((record, log))
}

/// Episode with layout swaps from `start`; identical to a plain episode
/// when `swaps` is empty.
pub fn run_dynamic(
    env_cfg: &EnvConfig,
    layout: Arc<WorldLayout>,
    swaps: &[LayoutSwap],
    start: Pose,
    goal: Point,
    controller: &mut dyn Controller,
    controller_id: &str,
) -> Result<(ScoreRecord, TrajectoryLog), EvalError> {
    let mut env = NavEnv::new(layout, env_cfg.clone());
    run_episode(&mut env, controller, start, goal, swaps, controller_id)
}

#[derive(Clone, Debug)]
pub struct GoalLeg {
    pub goal: Point,
    pub record: ScoreRecord,
    pub log: TrajectoryLog,
}

#[derive(Clone, Debug)]
pub struct GoalsReport {
    pub layout: String,
    pub legs: Vec<GoalLeg>,
    pub total_score: f64,
}

impl GoalsReport {
    pub fn success_rate(&self) -> f64 {
        let ok = self.legs.iter().filter(|l| l.record.outcome == EpisodeStatus::Success).count();
        ok as f64 / self.legs.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "leg,goal_x,goal_y,outcome,steps,score")?;
        for (i, l) in self.legs.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i,
                l.goal.x,
                l.goal.y,
                l.record.outcome.as_str(),
                l.record.steps,
                l.record.score
            )?;
        }
        Ok(())
    }
}

/// Visits the layout's goal points in order, starting at the origin facing
/// +x. A leg starts where the previous one ended; after a failed leg the
/// robot is placed on that leg's goal instead.
pub fn run_goals(env_cfg: &EnvConfig, layout: Arc<WorldLayout>, controller: &mut dyn Controller) -> Result<GoalsReport, EvalError> {
    if layout.goal_points.is_empty() {
        return Err(EvalError::NoGoals(layout.name.clone()));
    }
    let mut env = NavEnv::new(layout.clone(), env_cfg.clone());
    let mut pose = Pose::new(0.0, 0.0, 0.0);
    let mut legs = Vec::new();
    for goal in layout.goal_points.clone() {
        let (record, log) = run_episode(&mut env, controller, pose, goal, &[], "policy")?;
        let end = env.pose();
        pose = if record.outcome == EpisodeStatus::Success {
            end
        } else {
            Pose::new(goal.x, goal.y, end.theta)
        };
        legs.push(GoalLeg { goal, record, log });
    }
    Ok(GoalsReport {
        layout: layout.name.clone(),
        total_score: legs.iter().map(|l| l.record.score).sum(),
        legs,
    })
}

#[derive(Clone, Debug)]
pub struct EpisodesReport {
    pub records: Vec<ScoreRecord>,
}

impl EpisodesReport {
    pub fn success_rate(&self) -> f64 {
        let ok = self.records.iter().filter(|r| r.outcome == EpisodeStatus::Success).count();
        ok as f64 / self.records.len().max(1) as f64
    }

    pub fn total_score(&self) -> f64 {
        self.records.iter().map(|r| r.score).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "episode,outcome,steps,score")?;
        for (i, r) in self.records.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i, r.outcome.as_str(), r.steps, r.score)?;
        }
        Ok(())
    }
}

/// `n` episodes with random starts and goals drawn from `seed`.
pub fn run_random_episodes(
    env_cfg: &EnvConfig,
    layout: Arc<WorldLayout>,
    controller: &mut dyn Controller,
    n: usize,
    seed: u64,
) -> Result<EpisodesReport, EvalError> {
    let mut env = NavEnv::new(layout, env_cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let mut raw = env.reset_random(&mut rng)?;
        while !env.status().is_terminal() {
            let cmd = controller.act(&raw).map_err(EvalError::Control)?;
            raw = env.step(cmd)?.raw;
        }
        records.push(ScoreRecord::new(env.status(), env.steps())?);
    }
    Ok(EpisodesReport { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::VelocityCommand;
    use crate::world::Shape;
    use proptest::prelude::*;

    #[test]
    fn score_values() {
        assert_eq!(score(EpisodeStatus::Collision, 3).unwrap(), -2.0);
        assert_eq!(score(EpisodeStatus::Timeout, 400).unwrap(), -2.0);
        assert_eq!(score(EpisodeStatus::Success, 500).unwrap(), 1.5);
        assert!(matches!(score(EpisodeStatus::Running, 1), Err(EvalError::NonTerminal)));
    }

    proptest! {
        #[test]
        fn early_crash_never_outscores(early in 0usize..100, late in 100usize..4000, succ in 0usize..4000) {
            let e = score(EpisodeStatus::Collision, early).unwrap();
            prop_assert!(e <= score(EpisodeStatus::Collision, late).unwrap());
            prop_assert!(e < score(EpisodeStatus::Success, succ).unwrap());
        }
    }

    fn room() -> Arc<WorldLayout> {
        Arc::new(WorldLayout::resolve("empty8").unwrap())
    }

    #[test]
    fn goals_protocol_gives_one_row_per_goal() {
        let env = EnvConfig::default();
        let mut ctl = ReactiveMeta::for_env(&env);
        let rep = run_goals(&env, Arc::new(WorldLayout::resolve("env0").unwrap()), &mut ctl).unwrap();
        assert_eq!(rep.legs.len(), 4);
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
        assert!((rep.total_score - rep.legs.iter().map(|l| l.record.score).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn reactive_controller_reaches_goals_in_an_empty_room() {
        let env = EnvConfig::default();
        let mut ctl = ReactiveMeta::for_env(&env);
        let rep = run_goals(&env, room(), &mut ctl).unwrap();
        assert_eq!(rep.success_rate(), 1.0, "{:?}", rep.legs.iter().map(|l| l.record).collect::<Vec<_>>());
    }

    #[test]
    fn random_episodes_are_seeded() {
        let env = EnvConfig::default();
        let mut ctl = ReactiveMeta::for_env(&env);
        let a = run_random_episodes(&env, room(), &mut ctl, 5, 3).unwrap();
        let b = run_random_episodes(&env, room(), &mut ctl, 5, 3).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 5);
    }

    fn corridor_run(swaps: &[LayoutSwap]) -> (ScoreRecord, TrajectoryLog) {
        let env = EnvConfig::default();
        let mut ctl = ReactiveMeta::for_env(&env);
        run_dynamic(&env, room(), swaps, Pose::new(-3.0, 0.0, 0.0), Point::new(3.0, 0.0), &mut ctl, "reactive").unwrap()
    }

    fn blocked(name: &str, center: Point, radius: f64) -> Arc<WorldLayout> {
        Arc::new(room().with_obstacles(name, &[Shape::Circle { center, radius }]).unwrap())
    }

    #[test]
    fn no_swaps_matches_plain_episode() {
        let (rec, log) = corridor_run(&[]);
        let env = EnvConfig::default();
        let mut plain = NavEnv::new(room(), env.clone());
        let mut ctl = ReactiveMeta::for_env(&env);
        let mut raw = plain.reset_to(Pose::new(-3.0, 0.0, 0.0), Point::new(3.0, 0.0)).unwrap();
        while !plain.status().is_terminal() {
            raw = plain.step(ctl.act(&raw).unwrap()).unwrap().raw;
        }
        assert_eq!(plain.trace(), &log.rows[..]);
        assert_eq!(rec.steps, plain.steps());
        assert!(log.swaps.is_empty());
    }

    #[test]
    fn blocking_swap_changes_behaviour() {
        let (_, base) = corridor_run(&[]);
        let swap = LayoutSwap {
            at: Point::new(-1.5, 0.0),
            within: 0.3,
            layout: blocked("blocked", Point::new(0.5, 0.0), 0.5),
        };
        let (_, log) = corridor_run(&[swap]);
        assert_eq!(log.swaps.len(), 1);
        let k = log.swaps[0].step;
        assert_eq!(&base.rows[..=k], &log.rows[..=k]);
        let differs = base.rows[k + 1..]
            .iter()
            .zip(&log.rows[k + 1..])
            .any(|(a, b)| (a.v, a.omega) != (b.v, b.omega));
        assert!(differs, "commands should diverge after the corridor is blocked");
        assert!(log.rows.iter().all(|r| r.x <= 3.5));
    }

    #[test]
    fn swap_behind_the_robot_is_invisible() {
        let (_, base) = corridor_run(&[]);
        // the lidar's 90 degree blind spot faces backwards
        let swap = LayoutSwap {
            at: Point::new(-1.0, 0.0),
            within: 0.3,
            layout: blocked("behind", Point::new(-2.6, 0.0), 0.3),
        };
        let (_, log) = corridor_run(&[swap]);
        assert_eq!(log.swaps.len(), 1);
        assert_eq!(base.rows, log.rows);
    }

    #[test]
    fn logs_replay_through_kinematics() {
        let (_, log) = corridor_run(&[]);
        assert!(log.replay_error() < 1e-9);
        assert!(log.check_timing().is_ok());
        let env = EnvConfig::default();
        let mut s = Straight::new(VelocityCommand::new(0.5, 0.0));
        let (rec, log) = run_dynamic(&env, room(), &[], Pose::new(-3.0, 0.0, 0.0), Point::new(3.0, 2.0), &mut s, "straight").unwrap();
        assert_eq!(rec.outcome, EpisodeStatus::Collision);
        assert!(log.replay_error() < 1e-9);
    }
}
