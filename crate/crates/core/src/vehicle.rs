//! Circular differential-drive robot: dimensional configuration, pose,
//! constant-twist kinematics and the per-cycle arc model.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Point;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("linear velocity {0} is negative; the robot only drives forward")]
    NegativeVelocity(f64),
    #[error("control interval must be positive, got {0}")]
    NonPositiveInterval(f64),
    #[error("invalid dimensional config: {0}")]
    InvalidConfig(String),
}

/// Radius and velocity bounds of a circular robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionalConfig {
    pub radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl DimensionalConfig {
    pub fn new(radius: f64, v_max: f64, omega_max: f64) -> Result<Self, VehicleError> {
        let cfg = Self {
            radius,
            v_max,
            omega_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.radius) {
            return Err(VehicleError::InvalidConfig(format!("radius {} must be > 0", self.radius)));
        }
        if !pos(self.v_max) {
            return Err(VehicleError::InvalidConfig(format!("v_max {} must be > 0", self.v_max)));
        }
        if !pos(self.omega_max) {
            return Err(VehicleError::InvalidConfig(format!(
                "omega_max {} must be > 0",
                self.omega_max
            )));
        }
        Ok(())
    }

    /// Whether `cmd` respects these bounds, allowing `slack` for rounding.
    pub fn admits(&self, cmd: VelocityCommand, slack: f64) -> bool {
        cmd.v >= -slack && cmd.v <= self.v_max + slack && cmd.omega.abs() <= self.omega_max + slack
    }
}

impl Default for DimensionalConfig {
    fn default() -> Self {
        Self {
            radius: 0.2,
            v_max: 0.5,
            omega_max: PI / 2.0,
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// sin(x)/x, accurate near zero.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Exact constant-twist integration over `dt`.
///
/// The displacement is the chord of the arc: length `v dt sinc(w dt / 2)`
/// along the mid-arc heading, which stays well conditioned as `w -> 0`.
pub fn step_pose(p: Pose, cmd: VelocityCommand, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    let turn = cmd.omega * dt;
    let chord = cmd.v * dt * sinc(turn / 2.0);
    let heading = p.theta + turn / 2.0;
    Pose::new(
        p.x + chord * heading.cos(),
        p.y + chord * heading.sin(),
        p.theta + turn,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArcKind {
    /// Proper circular arc with signed curvature `omega / v` (1/m).
    Regular { curvature: f64 },
    Straight,
    /// Rotation in place; zero length.
    Spin,
    Halt,
}

/// One control cycle of motion under a constant command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcSegment {
    pub length: f64,
    pub kind: ArcKind,
}

impl ArcSegment {
    pub fn signed_curvature(&self) -> Option<f64> {
        match self.kind {
            ArcKind::Regular { curvature } => Some(curvature),
            ArcKind::Straight => Some(0.0),
            ArcKind::Spin | ArcKind::Halt => None,
        }
    }

    /// Signed radius of curvature; `None` for straight, spin and halt.
    pub fn radius(&self) -> Option<f64> {
        match self.kind {
            ArcKind::Regular { curvature } => Some(1.0 / curvature),
            _ => None,
        }
    }

    /// Whether this arc, started at the same pose, lies on `outer`: same
    /// signed curvature (relative `tol`) and no longer than it.
    pub fn is_contained_in(&self, outer: &ArcSegment, tol: f64) -> bool {
        if self.length > outer.length + tol * outer.length.max(1.0) {
            return false;
        }
        match (self.kind, outer.kind) {
            (ArcKind::Regular { curvature: a }, ArcKind::Regular { curvature: b }) => {
                // compare radii so the tolerance is relative to the geometry
                let (ra, rb) = (1.0 / a, 1.0 / b);
                (ra - rb).abs() <= tol * rb.abs().max(1.0)
            }
            // a zero-length segment is just the shared start point
            (ArcKind::Halt | ArcKind::Spin, _) => true,
            (a, b) => a == b,
        }
    }
}

pub fn arc_of(cmd: VelocityCommand, dt: f64) -> Result<ArcSegment, VehicleError> {
    if !(dt > 0.0) {
        return Err(VehicleError::NonPositiveInterval(dt));
    }
    if cmd.v < 0.0 {
        return Err(VehicleError::NegativeVelocity(cmd.v));
    }
    let length = cmd.v * dt;
    let kind = match (cmd.v > 0.0, cmd.omega != 0.0) {
        (true, true) => ArcKind::Regular {
            curvature: cmd.omega / cmd.v,
        },
        (true, false) => ArcKind::Straight,
        (false, true) => ArcKind::Spin,
        (false, false) => ArcKind::Halt,
    };
    Ok(ArcSegment { length, kind })
}
