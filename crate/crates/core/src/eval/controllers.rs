use std::f64::consts::FRAC_PI_2;

use crate::env::{ControlError, Controller, EnvConfig, LidarConfig, Observation, PreprocessConfig, RawObservation};
use crate::vehicle::{wrap_angle, DimensionalConfig, VelocityCommand};

/// Constant command, whatever the robot sees.
#[derive(Clone, Copy, Debug)]
pub struct Straight {
    pub cmd: VelocityCommand,
}

impl Straight {
    pub fn new(cmd: VelocityCommand) -> Self {
        Self { cmd }
    }
}

impl Controller for Straight {
    fn act(&mut self, _raw: &RawObservation) -> Result<VelocityCommand, ControlError> {
        Ok(self.cmd)
    }
}

/// Scripted gap-seeking controller over pre-processed observations.
///
/// Heads for the clear beam closest to the goal bearing, where a beam is
/// clear if the corridor of the robot's width along it, out to the
/// lookahead, holds no lidar return. Usable as a stand-in meta policy.
#[derive(Clone, Debug)]
pub struct ReactiveMeta {
    pub lidar: LidarConfig,
    pub preprocess: PreprocessConfig,
    pub bounds: DimensionalConfig,
    pub lookahead: f64,
    pub heading_gain: f64,
    pub margin: f64,
}

impl ReactiveMeta {
    pub fn new(lidar: LidarConfig, preprocess: PreprocessConfig, bounds: DimensionalConfig) -> Self {
        Self {
            lidar,
            preprocess,
            bounds,
            lookahead: 1.0,
            heading_gain: 2.0,
            margin: 0.1,
        }
    }

    pub fn for_env(env: &EnvConfig) -> Self {
        Self::new(env.lidar, env.preprocess, env.robot)
    }

    fn raw_range(&self, p: f64) -> f64 {
        if self.preprocess.enabled {
            self.preprocess.c_d + 1.0 / p
        } else {
            p
        }
    }

    pub fn command(&self, obs: &Observation) -> VelocityCommand {
        let ranges: Vec<f64> = obs.scan.iter().map(|p| self.raw_range(*p)).collect();
        let angles = self.lidar.beam_angles();
        let look = self.lookahead.min(obs.goal_dist);
        let width = self.bounds.radius + self.margin;
        let hits: Vec<(f64, f64)> = angles.iter().copied().zip(ranges.iter().copied()).collect();
        let clear = |a: f64| {
            hits.iter().all(|(b, r)| {
                let (along, lateral) = (r * (b - a).cos(), (r * (b - a).sin()).abs());
                !((0.0..=look).contains(&along) && lateral < width)
            })
        };
        // clear beam nearest the goal bearing; turn in place when none is
        let target = angles.iter().copied().filter(|a| clear(*a)).min_by(|a, b| {
            let (da, db) = (wrap_angle(a - obs.goal_angle).abs(), wrap_angle(b - obs.goal_angle).abs());
            da.total_cmp(&db)
        });
        let front = angles
            .iter()
            .zip(&ranges)
            .filter(|(a, _)| a.abs() <= FRAC_PI_2 / 2.0)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        let (v_max, w_max) = (self.bounds.v_max, self.bounds.omega_max);
        match target {
            Some(err) => {
                let omega = (self.heading_gain * err).clamp(-w_max, w_max);
                let slow = ((front - self.bounds.radius) / self.lookahead).clamp(0.0, 1.0);
                let v = (v_max * err.cos().max(0.0) * slow).min(obs.goal_dist).clamp(0.0, v_max);
                VelocityCommand::new(v, omega)
            }
            None => VelocityCommand::new(0.0, if obs.goal_angle >= 0.0 { w_max } else { -w_max }),
        }
    }

    pub fn as_meta_fn(&self) -> impl FnMut(&Observation) -> Result<VelocityCommand, ControlError> + '_ {
        move |o: &Observation| Ok(self.command(o))
    }
}

impl Controller for ReactiveMeta {
    fn act(&mut self, raw: &RawObservation) -> Result<VelocityCommand, ControlError> {
        let obs = raw.process(&self.preprocess)?;
        Ok(self.command(&obs))
    }
}
