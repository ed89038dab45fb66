//! Dimension-variable skill transfer.
//!
//! A controller trained for a meta robot of radius `R_m` drives a robot of
//! radius `R_s` with its own velocity bounds:
//!
//! 1. distance-like observations of the scaled robot are multiplied by
//!    `R_m / R_s` so the meta controller sees a geometrically similar scene;
//! 2. the meta command is mapped back by arc similarity. The ideal arc keeps
//!    the meta curvature radius scaled by `R_s / R_m`, and the executed arc
//!    is the longest prefix of it that the scaled robot's bounds allow.
//!
//! The closed form has two regimes depending on whether the ideal radius of
//! curvature is reachable at `v_max`. [`oracle_transfer`] recovers the same
//! optimum by brute force over a discretised velocity space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Controller, ControlError, LidarConfig, Observation, PreprocessConfig, RawObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vehicle::{arc_of, DimensionalConfig, VelocityCommand};

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("meta linear velocity {0} is negative")]
    NegativeVelocity(f64),
    #[error("oracle grid needs at least 2 points per axis, got {0}")]
    GridTooSmall(usize),
    #[error("no grid point satisfies the transfer constraints")]
    NoFeasiblePoint,
    #[error("invalid transfer context: {0}")]
    InvalidContext(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferContext {
    pub meta: DimensionalConfig,
    pub scaled: DimensionalConfig,
    pub dt: f64,
}

impl TransferContext {
    pub fn new(meta: DimensionalConfig, scaled: DimensionalConfig, dt: f64) -> Result<Self, TransferError> {
        let ctx = Self { meta, scaled, dt };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), TransferError> {
        self.meta
            .validate()
            .map_err(|e| TransferError::InvalidContext(format!("meta: {e}")))?;
        self.scaled
            .validate()
            .map_err(|e| TransferError::InvalidContext(format!("scaled: {e}")))?;
        if !(self.dt > 0.0) {
            return Err(TransferError::InvalidContext(format!("dt {} must be > 0", self.dt)));
        }
        Ok(())
    }

    /// `R_s / R_m`: how much larger the scaled robot is.
    pub fn size_ratio(&self) -> f64 {
        self.scaled.radius / self.meta.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferCase {
    /// Ideal curvature radius is reachable at `v_max`: linear speed limited.
    CurvatureReachableAtVmax,
    /// Ideal curvature radius is tighter than `v_max / omega_max`: turn rate limited.
    CurvatureUnreachableAtVmax,
    Straight,
    Spin,
    Halt,
}

impl TransferCase {
    pub fn as_str(self) -> &'static str {
        match self {
            TransferCase::CurvatureReachableAtVmax => "reachable",
            TransferCase::CurvatureUnreachableAtVmax => "unreachable",
            TransferCase::Straight => "straight",
            TransferCase::Spin => "spin",
            TransferCase::Halt => "halt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub v_ideal: f64,
    pub omega_ideal: f64,
    /// Signed ideal curvature radius; `None` when `omega_ideal == 0`.
    pub rho_ideal: Option<f64>,
    pub v_out: f64,
    pub omega_out: f64,
    pub case: TransferCase,
}

impl TransferResult {
    pub fn command(&self) -> VelocityCommand {
        VelocityCommand::new(self.v_out, self.omega_out)
    }

    pub fn ideal_command(&self) -> VelocityCommand {
        VelocityCommand::new(self.v_ideal, self.omega_ideal)
    }
}

/// Rescales the distance-like parts of a raw observation into the meta
/// robot's frame. Lidar ranges are clamped to the sensor range afterwards.
pub fn transfer_observation(obs: &RawObservation, ctx: &TransferContext, lidar: &LidarConfig) -> RawObservation {
    let k = ctx.meta.radius / ctx.scaled.radius;
    RawObservation {
        scan: obs
            .scan
            .iter()
            .map(|d| (k * d).clamp(lidar.d_min, lidar.d_max))
            .collect(),
        goal_dist: k * obs.goal_dist,
        goal_angle: obs.goal_angle,
        v: k * obs.v,
        omega: obs.omega,
    }
}

/// Maps a meta command onto the scaled robot by arc similarity.
pub fn transfer_policy(v_m: f64, omega_m: f64, ctx: &TransferContext) -> Result<TransferResult, TransferError> {
    if v_m < 0.0 {
        return Err(TransferError::NegativeVelocity(v_m));
    }
    let v_max = ctx.scaled.v_max;
    let w_max = ctx.scaled.omega_max;
    let v_ideal = ctx.size_ratio() * v_m;
    let omega_ideal = omega_m;

    let (rho_ideal, v_out, omega_out, case) = if v_ideal == 0.0 && omega_ideal == 0.0 {
        (None, 0.0, 0.0, TransferCase::Halt)
    } else if omega_ideal == 0.0 {
        (None, v_ideal.min(v_max), 0.0, TransferCase::Straight)
    } else if v_ideal == 0.0 {
        let w = w_max.min(omega_ideal.abs()).copysign(omega_ideal);
        (Some(0.0), 0.0, w, TransferCase::Spin)
    } else {
        let rho = v_ideal / omega_ideal;
        // Both branches shrink the ideal command by one common factor, which
        // keeps v/omega on the ideal radius and is exact when nothing binds.
        if v_max / w_max <= rho.abs() {
            let v = v_ideal.min(v_max);
            let w = (omega_ideal * (v / v_ideal)).clamp(-w_max, w_max);
            (Some(rho), v, w, TransferCase::CurvatureReachableAtVmax)
        } else {
            let w = w_max.min(omega_ideal.abs()).copysign(omega_ideal);
            let v = (v_ideal * (w / omega_ideal)).min(v_max);
            (Some(rho), v, w, TransferCase::CurvatureUnreachableAtVmax)
        }
    };
    Ok(TransferResult {
        v_ideal,
        omega_ideal,
        rho_ideal,
        v_out,
        omega_out,
        case,
    })
}

/// Discretised transfer problem shared by both oracle scans.
struct GridProblem {
    n: usize,
    v_max: f64,
    w_max: f64,
    dv: f64,
    dw: f64,
    v_ideal: f64,
    w_ideal: f64,
}

impl GridProblem {
    fn new(v_m: f64, omega_m: f64, ctx: &TransferContext, n: usize) -> Self {
        let v_max = ctx.scaled.v_max;
        let w_max = ctx.scaled.omega_max;
        Self {
            n,
            v_max,
            w_max,
            dv: v_max / (n - 1) as f64,
            dw: 2.0 * w_max / (n - 1) as f64,
            v_ideal: ctx.scaled.radius / ctx.meta.radius * v_m,
            w_ideal: omega_m,
        }
    }

    fn v_at(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.v_max
        } else {
            i as f64 * self.dv
        }
    }

    fn w_at(&self, j: usize) -> f64 {
        if j == self.n - 1 {
            self.w_max
        } else {
            -self.w_max + j as f64 * self.dw
        }
    }

    /// Feasible linear velocities in the grid column at `w`, as a closed
    /// interval.
    ///
    /// Hard constraints: `v <= v_ideal` (no longer than the ideal arc) and the
    /// grid bounds. The curvature equality is relaxed to "some point of the
    /// ideal direction that respects the bounds lies within one grid step on
    /// each axis", a band two grid steps wide.
    fn column(&self, w: f64) -> Option<(f64, f64)> {
        if self.w_ideal == 0.0 {
            // straight: the ideal direction is the v axis
            return (w.abs() <= self.dw).then_some((0.0, self.v_ideal));
        }
        // admissible omega* on the ideal direction near this column
        let lo = (w - self.dw).max(-self.w_max);
        let hi = (w + self.dw).min(self.w_max);
        let (lo, hi) = if self.w_ideal > 0.0 { (lo.max(0.0), hi) } else { (lo, hi.min(0.0)) };
        if lo > hi {
            return None;
        }
        if self.v_ideal == 0.0 {
            // spin: the ideal direction is the omega axis up to omega_ideal
            let near = lo.abs().min(hi.abs());
            return (near <= self.w_ideal.abs()).then_some((0.0, 0.0));
        }
        let rho = self.v_ideal / self.w_ideal;
        let (a, b) = (rho * lo, rho * hi);
        let top = (a.max(b) + self.dv).min(self.v_ideal);
        let bottom = a.min(b) - self.dv;
        (bottom <= top).then_some((bottom, top))
    }

    /// Feasibility of a grid point, with its distance from the ideal
    /// direction (in grid steps) as a tie-breaker.
    fn feasible(&self, v: f64, w: f64) -> Option<f64> {
        let (a, b) = self.column(w)?;
        if v < a || v > b {
            return None;
        }
        let resid = if self.w_ideal == 0.0 {
            w.abs() / self.dw
        } else if self.v_ideal == 0.0 {
            0.0
        } else {
            (v - self.v_ideal / self.w_ideal * w).abs() / self.dv
        };
        Some(resid)
    }

    fn better(cand: (f64, f64, f64), best: Option<(f64, f64, f64)>) -> bool {
        match best {
            None => true,
            Some((bv, _, br)) => cand.0 > bv || (cand.0 == bv && cand.2 < br),
        }
    }
}

fn check_grid(n: usize) -> Result<(), TransferError> {
    if n < 2 {
        Err(TransferError::GridTooSmall(n))
    } else {
        Ok(())
    }
}

/// Brute-force optimum over a `grid_n x grid_n` grid of
/// `[0, v_max] x [-omega_max, omega_max]`: the feasible point with the
/// largest linear velocity.
///
/// Every column is searched. Within a column the feasible set is an interval
/// in `v`, so only its highest grid row needs testing; the result equals the
/// full scan of [`oracle_transfer_exhaustive`].
pub fn oracle_transfer(
    v_m: f64,
    omega_m: f64,
    ctx: &TransferContext,
    grid_n: usize,
) -> Result<(f64, f64), TransferError> {
    check_grid(grid_n)?;
    if v_m < 0.0 {
        return Err(TransferError::NegativeVelocity(v_m));
    }
    if v_m == 0.0 && omega_m == 0.0 {
        return Ok((0.0, 0.0));
    }
    let p = GridProblem::new(v_m, omega_m, ctx, grid_n);
    let mut best: Option<(f64, f64, f64)> = None;
    for j in 0..grid_n {
        let w = p.w_at(j);
        let Some((_, top)) = p.column(w) else {
            continue;
        };
        if top < 0.0 {
            continue;
        }
        // highest grid row not above the column's top
        let mut i = ((top / p.dv).floor() as usize).min(grid_n - 1);
        while i + 1 < grid_n && p.v_at(i + 1) <= top {
            i += 1;
        }
        while i > 0 && p.v_at(i) > top {
            i -= 1;
        }
        if let Some(r) = p.feasible(p.v_at(i), w) {
            let cand = (p.v_at(i), w, r);
            if GridProblem::better(cand, best) {
                best = Some(cand);
            }
        }
    }
    best.map(|(v, w, _)| (v, w)).ok_or(TransferError::NoFeasiblePoint)
}

/// Literal full scan of every grid point. Quadratic in `grid_n`; used to
/// cross-check [`oracle_transfer`] on small grids.
pub fn oracle_transfer_exhaustive(
    v_m: f64,
    omega_m: f64,
    ctx: &TransferContext,
    grid_n: usize,
) -> Result<(f64, f64), TransferError> {
    check_grid(grid_n)?;
    if v_m < 0.0 {
        return Err(TransferError::NegativeVelocity(v_m));
    }
    if v_m == 0.0 && omega_m == 0.0 {
        return Ok((0.0, 0.0));
    }
    let p = GridProblem::new(v_m, omega_m, ctx, grid_n);
    let mut best: Option<(f64, f64, f64)> = None;
    for j in 0..grid_n {
        for i in 0..grid_n {
            let (v, w) = (p.v_at(i), p.w_at(j));
            if let Some(r) = p.feasible(v, w) {
                if GridProblem::better((v, w, r), best) {
                    best = Some((v, w, r));
                }
            }
        }
    }
    best.map(|(v, w, _)| (v, w)).ok_or(TransferError::NoFeasiblePoint)
}

/// Grid spacing of the oracle in `v` and `omega`.
pub fn oracle_steps(ctx: &TransferContext, grid_n: usize) -> (f64, f64) {
    let n = (grid_n.max(2) - 1) as f64;
    (ctx.scaled.v_max / n, 2.0 * ctx.scaled.omega_max / n)
}

/// A meta controller running a scaled robot.
///
/// Raw observations are rescaled, then pre-processed, then fed to the meta
/// policy; its command is mapped back with [`transfer_policy`]. Scaling
/// happens on raw ranges because the reciprocal pre-processing does not
/// commute with scaling.
pub struct DvstController<F> {
    meta_policy: F,
    ctx: TransferContext,
    lidar: LidarConfig,
    preprocess: PreprocessConfig,
    last: Option<TransferResult>,
}

impl<F> DvstController<F>
where
    F: FnMut(&Observation) -> Result<VelocityCommand, ControlError>,
{
    pub fn context(&self) -> &TransferContext {
        &self.ctx
    }

    /// The transfer applied on the most recent call to `act`.
    pub fn last_transfer(&self) -> Option<&TransferResult> {
        self.last.as_ref()
    }
}

impl<F> Controller for DvstController<F>
where
    F: FnMut(&Observation) -> Result<VelocityCommand, ControlError>,
{
    fn act(&mut self, raw: &RawObservation) -> Result<VelocityCommand, ControlError> {
        let meta_raw = transfer_observation(raw, &self.ctx, &self.lidar);
        let obs = meta_raw.process(&self.preprocess)?;
        let cmd = (self.meta_policy)(&obs)?;
        let res = transfer_policy(cmd.v.max(0.0), cmd.omega, &self.ctx)?;
        self.last = Some(res);
        Ok(res.command())
    }
}

/// Composes observation transfer, pre-processing, the meta policy and
/// policy transfer into a controller for the scaled robot.
pub fn wrap_policy<F>(
    meta_policy: F,
    ctx: TransferContext,
    lidar: LidarConfig,
    preprocess: PreprocessConfig,
) -> DvstController<F>
where
    F: FnMut(&Observation) -> Result<VelocityCommand, ControlError>,
{
    DvstController {
        meta_policy,
        ctx,
        lidar,
        preprocess,
        last: None,
    }
}

/// Grids below this size are too coarse for a tight optimality check; the
/// oracle comparison still runs but the verdict is only as good as its step.
pub const FINE_GRID_MIN: usize = 1000;

/// One random transfer problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferInstance {
    pub v_m: f64,
    pub omega_m: f64,
    pub ctx: TransferContext,
}

impl TransferInstance {
    /// Radii in [0.1, 1] m, meta speed in [0, 1] m/s, meta turn rate in
    /// [-pi, pi] rad/s, scaled bounds in (0, 1] m/s and (0, pi] rad/s.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> Result<Self, TransferError> {
        use std::f64::consts::PI;
        let robot = |rng: &mut R| {
            DimensionalConfig::new(
                rng.gen_range(0.1..=1.0),
                1.0 - rng.gen_range(0.0..1.0),
                PI * (1.0 - rng.gen_range(0.0..1.0)),
            )
            .map_err(|e| TransferError::InvalidContext(e.to_string()))
        };
        let meta = robot(rng)?;
        let scaled = robot(rng)?;
        Ok(Self {
            v_m: rng.gen_range(0.0..=1.0),
            omega_m: rng.gen_range(-PI..=PI),
            ctx: TransferContext::new(meta, scaled, dt)?,
        })
    }
}

/// Outcome of checking the closed form on one instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceCheck {
    pub result: TransferResult,
    pub oracle: Option<(f64, f64)>,
    pub within_bounds: bool,
    pub curvature_matches: bool,
    pub arc_contained: bool,
    /// `v_oracle - v_out`; positive when the grid found a faster command.
    pub shortfall: f64,
    pub optimal: bool,
}

impl InstanceCheck {
    pub fn passed(&self) -> bool {
        self.within_bounds && self.curvature_matches && self.arc_contained && self.optimal
    }
}

/// Checks the closed form on one instance against the hard constraints,
/// arc similarity and the grid oracle. `tol` is the relative tolerance on
/// curvature and arc length.
pub fn check_instance(inst: &TransferInstance, grid_n: usize, tol: f64) -> Result<InstanceCheck, TransferError> {
    let ctx = &inst.ctx;
    let r = transfer_policy(inst.v_m, inst.omega_m, ctx)?;
    let (v_max, w_max) = (ctx.scaled.v_max, ctx.scaled.omega_max);
    let within_bounds = (0.0..=v_max).contains(&r.v_out) && r.omega_out.abs() <= w_max;
    // v_out * omega_ideal == v_ideal * omega_out, signs included
    let cross = (r.v_out * r.omega_ideal - r.v_ideal * r.omega_out).abs();
    let scale = (r.v_out * r.omega_ideal).abs().max((r.v_ideal * r.omega_out).abs());
    let curvature_matches = cross <= tol * scale && r.omega_out * r.omega_ideal >= 0.0;
    let arc_contained = match (arc_of(r.command(), ctx.dt), arc_of(r.ideal_command(), ctx.dt)) {
        (Ok(out), Ok(ideal)) => out.is_contained_in(&ideal, tol),
        _ => false,
    };
    let oracle = match oracle_transfer(inst.v_m, inst.omega_m, ctx, grid_n) {
        Ok(o) => Some(o),
        Err(TransferError::NoFeasiblePoint) => None,
        Err(e) => return Err(e),
    };
    let (dv, _) = oracle_steps(ctx, grid_n);
    let shortfall = oracle.map_or(0.0, |(v, _)| v - r.v_out);
    Ok(InstanceCheck {
        result: r,
        oracle,
        within_bounds,
        curvature_matches,
        arc_contained,
        shortfall,
        optimal: shortfall <= dv * (1.0 + 1e-9),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub samples: usize,
    pub seed: u64,
    pub grid_n: usize,
    pub failures: usize,
    /// Largest `|v_out - v_oracle|` over instances the oracle could solve.
    pub max_deviation: f64,
    /// Largest `v_oracle - v_out` divided by the grid step.
    pub max_shortfall_steps: f64,
    /// Instances where no grid point met the relaxed constraints.
    pub oracle_infeasible: usize,
    pub coarse_grid: bool,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Samples `samples` random instances from `seed` and certifies each one.
pub fn certify(samples: usize, seed: u64, grid_n: usize, dt: f64) -> Result<OracleReport, TransferError> {
    check_grid(grid_n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = OracleReport {
        samples,
        seed,
        grid_n,
        failures: 0,
        max_deviation: 0.0,
        max_shortfall_steps: 0.0,
        oracle_infeasible: 0,
        coarse_grid: grid_n < FINE_GRID_MIN,
    };
    for _ in 0..samples {
        let inst = TransferInstance::sample(&mut rng, dt)?;
        let c = check_instance(&inst, grid_n, 1e-9)?;
        if !c.passed() {
            rep.failures += 1;
        }
        match c.oracle {
            Some((v, _)) => {
                let (dv, _) = oracle_steps(&inst.ctx, grid_n);
                rep.max_deviation = rep.max_deviation.max((v - c.result.v_out).abs());
                rep.max_shortfall_steps = rep.max_shortfall_steps.max(c.shortfall / dv);
            }
            None => rep.oracle_infeasible += 1,
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::ArcKind;
    use proptest::prelude::*;

    fn ctx(rm: f64, rs: f64, v_max: f64, w_max: f64) -> TransferContext {
        TransferContext::new(
            DimensionalConfig::new(rm, 0.5, 1.0).unwrap(),
            DimensionalConfig::new(rs, v_max, w_max).unwrap(),
            0.2,
        )
        .unwrap()
    }

    #[test]
    fn reachable_branch_worked_case() {
        let r = transfer_policy(0.5, 0.25, &ctx(0.3, 0.6, 0.4, 0.5)).unwrap();
        assert_eq!(r.case, TransferCase::CurvatureReachableAtVmax);
        assert!((r.v_ideal - 1.0).abs() < 1e-12);
        assert!((r.rho_ideal.unwrap() - 4.0).abs() < 1e-12);
        assert!((r.v_out - 0.4).abs() < 1e-12 && (r.omega_out - 0.1).abs() < 1e-12);
    }

    #[test]
    fn unreachable_branch_worked_case() {
        let r = transfer_policy(0.2, 1.0, &ctx(0.3, 0.6, 1.0, 0.5)).unwrap();
        assert_eq!(r.case, TransferCase::CurvatureUnreachableAtVmax);
        assert!((r.rho_ideal.unwrap() - 0.4).abs() < 1e-12);
        assert!((r.v_out - 0.2).abs() < 1e-12 && (r.omega_out - 0.5).abs() < 1e-12);
    }

    #[test]
    fn special_cases() {
        let c = ctx(0.3, 0.6, 0.4, 0.5);
        let s = transfer_policy(0.3, 0.0, &c).unwrap();
        assert_eq!((s.case, s.v_out, s.omega_out), (TransferCase::Straight, 0.4, 0.0));
        let sp = transfer_policy(0.0, -2.0, &c).unwrap();
        assert_eq!((sp.case, sp.v_out, sp.omega_out), (TransferCase::Spin, 0.0, -0.5));
        let h = transfer_policy(0.0, 0.0, &c).unwrap();
        assert_eq!((h.case, h.v_out, h.omega_out), (TransferCase::Halt, 0.0, 0.0));
        assert_eq!(transfer_policy(-0.1, 0.0, &c), Err(TransferError::NegativeVelocity(-0.1)));
    }

    #[test]
    fn identity_is_bit_exact() {
        let c = ctx(0.3, 0.3, 0.5, 1.0);
        for (v, w) in [(0.5, 1.0), (0.1, -0.7), (0.33, 0.0), (0.0, 0.2), (0.49, 0.0001)] {
            let r = transfer_policy(v, w, &c).unwrap();
            assert_eq!((r.v_out, r.omega_out), (v, w));
        }
    }

    #[test]
    fn observation_scaling() {
        let lidar = LidarConfig::default();
        let raw = RawObservation {
            scan: vec![2.0, 20.0, 0.06],
            goal_dist: 3.0,
            goal_angle: 0.7,
            v: 0.4,
            omega: -0.3,
        };
        let same = transfer_observation(&raw, &ctx(0.3, 0.3, 1.0, 1.0), &lidar);
        assert_eq!(same, raw);

        let half = transfer_observation(&raw, &ctx(0.3, 0.6, 1.0, 1.0), &lidar);
        assert_eq!(half.scan[0], 1.0);
        assert_eq!(half.scan[2], 0.05);
        assert_eq!((half.goal_dist, half.goal_angle, half.v, half.omega), (1.5, 0.7, 0.2, -0.3));

        let double = transfer_observation(&raw, &ctx(0.3, 0.15, 1.0, 1.0), &lidar);
        assert_eq!(double.scan[1], 30.0);
    }

    #[test]
    fn oracle_agrees_on_worked_cases() {
        let c1 = ctx(0.3, 0.6, 0.4, 0.5);
        let (dv, dw) = oracle_steps(&c1, 2000);
        let (v, w) = oracle_transfer(0.5, 0.25, &c1, 2000).unwrap();
        assert!((v - 0.4).abs() <= dv && (w - 0.1).abs() <= dw);

        let c2 = ctx(0.3, 0.6, 1.0, 0.5);
        let (dv, dw) = oracle_steps(&c2, 2000);
        let (v, w) = oracle_transfer(0.2, 1.0, &c2, 2000).unwrap();
        assert!((v - 0.2).abs() <= dv && (w - 0.5).abs() <= dw);

        assert_eq!(oracle_transfer(0.0, 0.0, &c2, 2000).unwrap(), (0.0, 0.0));
        assert_eq!(oracle_transfer(0.1, 0.1, &c2, 1), Err(TransferError::GridTooSmall(1)));
    }

    #[test]
    fn wrapped_controller_identity_and_scaling() {
        let lidar = LidarConfig::default();
        let pp = PreprocessConfig::default();
        let meta_cmd = VelocityCommand::new(0.3, 0.2);
        let policy = |_: &Observation| Ok(meta_cmd);
        let raw = RawObservation {
            scan: vec![1.0; 8],
            goal_dist: 2.0,
            goal_angle: 0.1,
            v: 0.0,
            omega: 0.0,
        };

        let mut same = wrap_policy(policy, ctx(0.3, 0.3, 0.5, 1.0), lidar, pp);
        assert_eq!(same.act(&raw).unwrap(), meta_cmd);

        let mut big = wrap_policy(policy, ctx(0.3, 0.6, 10.0, 10.0), lidar, pp);
        let out = big.act(&raw).unwrap();
        let meta_arc = arc_of(meta_cmd, 0.2).unwrap();
        let arc = arc_of(out, 0.2).unwrap();
        assert!((arc.length - 2.0 * meta_arc.length).abs() < 1e-12);
        let rho = big.last_transfer().unwrap().rho_ideal.unwrap();
        assert!((arc.radius().unwrap() - rho).abs() < 1e-12);
        assert!((rho - 2.0 * meta_arc.radius().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fast_oracle_matches_full_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let c = ctx(
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.05..1.0),
                rng.gen_range(0.05..3.2),
            );
            let v = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0) };
            let w = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(-3.2..3.2) };
            let n = rng.gen_range(2..150);
            assert_eq!(
                oracle_transfer(v, w, &c, n),
                oracle_transfer_exhaustive(v, w, &c, n),
                "v={v} w={w} n={n} ctx={c:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn bounds_similarity_and_sign(
            rm in 0.1..1.0f64, rs in 0.1..1.0f64, v_max in 0.01..1.0f64, w_max in 0.01..3.2f64,
            v in 0.0..1.0f64, w in -3.2..3.2f64,
        ) {
            let c = ctx(rm, rs, v_max, w_max);
            let r = transfer_policy(v, w, &c).unwrap();
            prop_assert!(r.v_out >= 0.0 && r.v_out <= v_max);
            prop_assert!(r.omega_out.abs() <= w_max);
            if r.omega_out != 0.0 {
                prop_assert_eq!(r.omega_out.signum(), r.omega_ideal.signum());
            }
            let ideal = arc_of(r.ideal_command(), c.dt).unwrap();
            let out = arc_of(r.command(), c.dt).unwrap();
            prop_assert!(out.is_contained_in(&ideal, 1e-9));
            if let (ArcKind::Regular { .. }, Some(rho)) = (out.kind, r.rho_ideal) {
                prop_assert!((r.v_out / r.omega_out - rho).abs() <= 1e-9 * rho.abs().max(1.0));
            }
        }

        #[test]
        fn unconstrained_scales_compose(
            rm in 0.1..1.0f64, ra in 0.1..1.0f64, rb in 0.1..1.0f64,
            v in 0.0..1.0f64, w in -3.2..3.2f64,
        ) {
            // bounds far above anything reachable
            let big = |r| DimensionalConfig::new(r, 1e6, 1e6).unwrap();
            let meta = big(rm);
            let to_a = TransferContext::new(meta, big(ra), 0.2).unwrap();
            let a_to_b = TransferContext::new(big(ra), big(rb), 0.2).unwrap();
            let direct = TransferContext::new(meta, big(rb), 0.2).unwrap();
            let a = transfer_policy(v, w, &to_a).unwrap();
            let ab = transfer_policy(a.v_ideal, a.omega_ideal, &a_to_b).unwrap();
            let d = transfer_policy(v, w, &direct).unwrap();
            prop_assert!((ab.v_out - d.v_out).abs() <= 1e-12 * d.v_out.max(1.0));
            prop_assert_eq!(ab.omega_out, d.omega_out);
        }
    }

    #[test]
    fn certify_small_run_is_deterministic() {
        let a = certify(200, 11, 2000, 0.2).unwrap();
        let b = certify(200, 11, 2000, 0.2).unwrap();
        assert_eq!(a, b);
        assert!(a.passed(), "{a:?}");
        assert!(!a.coarse_grid);
        assert!(a.max_shortfall_steps <= 1.0 + 1e-9);
        let coarse = certify(50, 11, 10, 0.2).unwrap();
        assert!(coarse.coarse_grid);
        assert_eq!(certify(1, 0, 1, 0.2), Err(TransferError::GridTooSmall(1)));
    }

    #[test]
    fn check_instance_on_worked_case() {
        let inst = TransferInstance {
            v_m: 0.5,
            omega_m: 0.25,
            ctx: ctx(0.3, 0.6, 0.4, 0.5),
        };
        let c = check_instance(&inst, 2000, 1e-9).unwrap();
        assert!(c.passed());
        let (v, w) = c.oracle.unwrap();
        assert!(v <= 0.4 && c.shortfall <= 0.0);
        assert!((w - 0.1).abs() <= oracle_steps(&inst.ctx, 2000).1);
    }

}
