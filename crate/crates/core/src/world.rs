//! Static room geometry: layouts, obstacle shapes, analytic ray casting and
//! disc collision queries.
//!
//! Rooms are axis-aligned rectangles centred on the origin and are always
//! closed, so the walls come from the bounds rather than from the obstacle
//! list.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Layout file format version understood by this build.
pub const LAYOUT_FORMAT: u32 = 1;

const SAMPLE_ATTEMPTS: usize = 10_000;
const GEOM_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("ray origin ({x}, {y}) lies outside the room bounds")]
    OriginOutOfBounds { x: f64, y: f64 },
    #[error("invalid sensor range: d_min={d_min}, d_max={d_max}")]
    InvalidRange { d_min: f64, d_max: f64 },
    #[error("no collision-free position for radius {radius} after {attempts} attempts")]
    NoFreeSpace { radius: f64, attempts: usize },
    #[error("invalid layout `{name}`: {reason}")]
    InvalidLayout { name: String, reason: String },
    #[error("unsupported layout format {0}")]
    UnsupportedFormat(u32),
    #[error("unknown built-in layout `{0}`")]
    UnknownLayout(String),
    #[error("layout io: {0}")]
    Io(#[from] std::io::Error),
    #[error("layout json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Room extent; the room spans `[-w/2, w/2] x [-h/2, h/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub w: f64,
    pub h: f64,
}

impl Bounds {
    pub fn half_w(&self) -> f64 {
        self.w / 2.0
    }

    pub fn half_h(&self) -> f64 {
        self.h / 2.0
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x.abs() <= self.half_w() && p.y.abs() <= self.half_h()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Circle { center: Point, radius: f64 },
    Rect { min: Point, max: Point },
    Polygon { vertices: Vec<Point> },
}

impl Shape {
    pub fn circle(x: f64, y: f64, radius: f64) -> Self {
        Shape::Circle {
            center: Point::new(x, y),
            radius,
        }
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Shape::Rect {
            min: Point::new(x0, y0),
            max: Point::new(x1, y1),
        }
    }

    /// Vertices in counter-clockwise order (empty for circles).
    pub fn vertices(&self) -> Vec<Point> {
        match self {
            Shape::Circle { .. } => Vec::new(),
            Shape::Rect { min, max } => vec![
                *min,
                Point::new(max.x, min.y),
                *max,
                Point::new(min.x, max.y),
            ],
            Shape::Polygon { vertices } => {
                if signed_area(vertices) < 0.0 {
                    vertices.iter().rev().copied().collect()
                } else {
                    vertices.clone()
                }
            }
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match self {
            Shape::Circle { center, radius } => p.dist(*center) <= *radius,
            Shape::Rect { min, max } => {
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y
            }
            Shape::Polygon { .. } => {
                let vs = self.vertices();
                (0..vs.len()).all(|i| {
                    let a = vs[i];
                    let b = vs[(i + 1) % vs.len()];
                    b.sub(a).cross(p.sub(a)) >= 0.0
                })
            }
        }
    }

    /// Euclidean distance from `p` to the shape; zero when inside.
    pub fn distance(&self, p: Point) -> f64 {
        match self {
            Shape::Circle { center, radius } => (p.dist(*center) - radius).max(0.0),
            _ => {
                if self.contains(p) {
                    return 0.0;
                }
                let vs = self.vertices();
                (0..vs.len())
                    .map(|i| segment_distance(p, vs[i], vs[(i + 1) % vs.len()]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Smallest `t >= 0` with `origin + t * dir` on the shape, `0` when the
    /// origin is already inside.
    fn ray_hit(&self, origin: Point, dir: Point) -> Option<f64> {
        match self {
            Shape::Circle { center, radius } => {
                let oc = origin.sub(*center);
                let b = dir.dot(oc);
                let c = oc.dot(oc) - radius * radius;
                if c <= 0.0 {
                    return Some(0.0);
                }
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                (t >= 0.0).then_some(t)
            }
            _ => {
                if self.contains(origin) {
                    return Some(0.0);
                }
                let vs = self.vertices();
                (0..vs.len())
                    .filter_map(|i| ray_segment(origin, dir, vs[i], vs[(i + 1) % vs.len()]))
                    .reduce(f64::min)
            }
        }
    }

    fn check(&self, bounds: &Bounds) -> Result<(), String> {
        match self {
            Shape::Circle { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(format!("circle radius {radius} must be positive"));
                }
                let corners = [
                    center.add(Point::new(*radius, *radius)),
                    center.sub(Point::new(*radius, *radius)),
                ];
                if !corners.iter().all(|c| bounds.contains(*c)) {
                    return Err(format!("circle at ({}, {}) leaves bounds", center.x, center.y));
                }
            }
            Shape::Rect { min, max } => {
                if !(min.x < max.x && min.y < max.y) {
                    return Err("rect needs min < max on both axes".into());
                }
                if !bounds.contains(*min) || !bounds.contains(*max) {
                    return Err("rect leaves bounds".into());
                }
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err("polygon needs at least 3 vertices".into());
                }
                if !is_convex(vertices) {
                    return Err("polygon must be simple and convex".into());
                }
                if !vertices.iter().all(|v| bounds.contains(*v)) {
                    return Err("polygon vertex leaves bounds".into());
                }
            }
        }
        Ok(())
    }
}

fn signed_area(vs: &[Point]) -> f64 {
    (0..vs.len())
        .map(|i| vs[i].cross(vs[(i + 1) % vs.len()]))
        .sum::<f64>()
        / 2.0
}

fn is_convex(vs: &[Point]) -> bool {
    let n = vs.len();
    let sign = signed_area(vs).signum();
    if sign == 0.0 {
        return false;
    }
    let mut turning = 0.0;
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        let c = vs[(i + 2) % n];
        let e1 = b.sub(a);
        let e2 = c.sub(b);
        let cr = e1.cross(e2);
        if cr * sign <= 0.0 {
            return false;
        }
        turning += cr.atan2(e1.dot(e2));
    }
    // exactly one winding rules out star-shaped self-intersections
    (turning.abs() - std::f64::consts::TAU).abs() < 1e-6
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let e = b.sub(a);
    let len2 = e.dot(e);
    let t = if len2 > 0.0 {
        (p.sub(a).dot(e) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(a.add(e.scale(t)))
}

fn ray_segment(o: Point, u: Point, a: Point, b: Point) -> Option<f64> {
    let e = b.sub(a);
    let denom = u.cross(e);
    if denom.abs() < GEOM_EPS {
        return None;
    }
    let ao = a.sub(o);
    let t = ao.cross(e) / denom;
    let s = ao.cross(u) / denom;
    (t >= 0.0 && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&s)).then_some(t)
}

/// A closed room with static obstacles. Immutable once loaded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldLayout {
    pub name: String,
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Shape>,
    #[serde(default)]
    pub goal_points: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    format: u32,
    #[serde(flatten)]
    layout: WorldLayout,
}

impl WorldLayout {
    pub fn new(name: impl Into<String>, bounds: Bounds, obstacles: Vec<Shape>) -> Result<Self, WorldError> {
        let layout = Self {
            name: name.into(),
            bounds,
            obstacles,
            goal_points: Vec::new(),
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Empty square room of side `side` metres.
    pub fn empty_square(name: impl Into<String>, side: f64) -> Result<Self, WorldError> {
        Self::new(name, Bounds { w: side, h: side }, Vec::new())
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |reason: String| WorldError::InvalidLayout {
            name: self.name.clone(),
            reason,
        };
        if !(self.bounds.w > 0.0 && self.bounds.h > 0.0) {
            return Err(bad("bounds side lengths must be positive".into()));
        }
        for (i, s) in self.obstacles.iter().enumerate() {
            s.check(&self.bounds)
                .map_err(|r| bad(format!("obstacles[{i}]: {r}")))?;
        }
        for (i, g) in self.goal_points.iter().enumerate() {
            if !self.bounds.contains(*g) {
                return Err(bad(format!("goal_points[{i}] leaves bounds")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: LayoutFile = serde_json::from_str(text)?;
        if file.format != LAYOUT_FORMAT {
            return Err(WorldError::UnsupportedFormat(file.format));
        }
        file.layout.validate()?;
        Ok(file.layout)
    }

    pub fn to_json(&self) -> String {
        let file = LayoutFile {
            format: LAYOUT_FORMAT,
            layout: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("layout serializes")
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Built-in layout by name, or a layout file when `name` ends in `.json`.
    pub fn resolve(name: &str) -> Result<Self, WorldError> {
        if name.ends_with(".json") {
            return Self::load(Path::new(name));
        }
        let text = match name {
            "empty8" => include_str!("../layouts/empty8.json"),
            "env0" => include_str!("../layouts/env0.json"),
            "env1" => include_str!("../layouts/env1.json"),
            "env2" => include_str!("../layouts/env2.json"),
            "env3" => include_str!("../layouts/env3.json"),
            "room12" => include_str!("../layouts/room12.json"),
            "gate" => include_str!("../layouts/gate.json"),
            other => return Err(WorldError::UnknownLayout(other.to_string())),
        };
        Self::from_json(text)
    }

    /// Names accepted by [`WorldLayout::resolve`] without a file path.
    pub fn builtin_names() -> &'static [&'static str] {
        &["empty8", "env0", "env1", "env2", "env3", "room12", "gate"]
    }

    /// Distance along the ray to the first wall or obstacle, clamped into
    /// `[d_min, d_max]`.
    pub fn cast_ray(
        &self,
        origin: Point,
        angle: f64,
        d_min: f64,
        d_max: f64,
    ) -> Result<f64, WorldError> {
        if !(d_min >= 0.0 && d_max > d_min) {
            return Err(WorldError::InvalidRange { d_min, d_max });
        }
        if !self.bounds.contains(origin) {
            return Err(WorldError::OriginOutOfBounds {
                x: origin.x,
                y: origin.y,
            });
        }
        let dir = Point::new(angle.cos(), angle.sin());
        let mut t = self.wall_exit(origin, dir);
        for s in &self.obstacles {
            if let Some(hit) = s.ray_hit(origin, dir) {
                t = t.min(hit);
            }
        }
        Ok(t.clamp(d_min, d_max))
    }

    fn wall_exit(&self, o: Point, u: Point) -> f64 {
        let axis = |p: f64, d: f64, half: f64| {
            if d > GEOM_EPS {
                (half - p) / d
            } else if d < -GEOM_EPS {
                (-half - p) / d
            } else {
                f64::INFINITY
            }
        };
        axis(o.x, u.x, self.bounds.half_w()).min(axis(o.y, u.y, self.bounds.half_h()))
    }

    /// True iff a disc of `radius` at `center` overlaps an obstacle or
    /// crosses a wall. Touching counts as free.
    pub fn circle_collides(&self, center: Point, radius: f64) -> bool {
        if center.x - radius < -self.bounds.half_w()
            || center.x + radius > self.bounds.half_w()
            || center.y - radius < -self.bounds.half_h()
            || center.y + radius > self.bounds.half_h()
        {
            return true;
        }
        self.clearance(center) < radius
    }

    /// Distance to the nearest obstacle surface, ignoring walls.
    pub fn clearance(&self, p: Point) -> f64 {
        self.obstacles
            .iter()
            .map(|s| s.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform rejection sample of a collision-free disc centre.
    pub fn sample_free_point<R: Rng + ?Sized>(
        &self,
        radius: f64,
        rng: &mut R,
    ) -> Result<Point, WorldError> {
        let hw = self.bounds.half_w() - radius;
        let hh = self.bounds.half_h() - radius;
        if hw > 0.0 && hh > 0.0 {
            for _ in 0..SAMPLE_ATTEMPTS {
                let p = Point::new(rng.gen_range(-hw..hw), rng.gen_range(-hh..hh));
                if !self.circle_collides(p, radius) {
                    return Ok(p);
                }
            }
        }
        Err(WorldError::NoFreeSpace {
            radius,
            attempts: SAMPLE_ATTEMPTS,
        })
    }

    /// Seeded variant of [`WorldLayout::sample_free_point`].
    pub fn sample_free_pose(&self, radius: f64, seed: u64) -> Result<Point, WorldError> {
        self.sample_free_point(radius, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Copy of this layout with `extra` obstacles appended.
    pub fn with_obstacles(&self, name: impl Into<String>, extra: &[Shape]) -> Result<Self, WorldError> {
        let mut out = self.clone();
        out.name = name.into();
        out.obstacles.extend_from_slice(extra);
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room8() -> WorldLayout {
        WorldLayout::empty_square("room8", 8.0).unwrap()
    }

    #[test]
    fn ray_hits_east_wall() {
        let d = room8().cast_ray(Point::new(0.0, 0.0), 0.0, 0.0, 30.0).unwrap();
        assert!((d - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_circle_front() {
        let l = WorldLayout::new("c", Bounds { w: 8.0, h: 8.0 }, vec![Shape::circle(2.0, 0.0, 0.5)]).unwrap();
        let d = l.cast_ray(Point::new(0.0, 0.0), 0.0, 0.0, 30.0).unwrap();
        assert!((d - 1.5).abs() < 1e-12);
    }

    #[test]
    fn ray_clamps_to_sensor_max() {
        let l = WorldLayout::empty_square("big", 70.0).unwrap();
        let d = l.cast_ray(Point::new(0.0, 0.0), 0.0, 0.05, 30.0).unwrap();
        assert_eq!(d, 30.0);
    }

    #[test]
    fn ray_origin_outside_errors() {
        let err = room8().cast_ray(Point::new(5.0, 0.0), 0.0, 0.0, 30.0);
        assert!(matches!(err, Err(WorldError::OriginOutOfBounds { .. })));
        let err = room8().cast_ray(Point::new(0.0, 0.0), 0.0, 1.0, 1.0);
        assert!(matches!(err, Err(WorldError::InvalidRange { .. })));
    }

    #[test]
    fn ray_inside_obstacle_reads_min() {
        let l = WorldLayout::new("c", Bounds { w: 8.0, h: 8.0 }, vec![Shape::rect(-1.0, -1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(l.cast_ray(Point::new(0.0, 0.0), 1.0, 0.05, 30.0).unwrap(), 0.05);
    }

    #[test]
    fn ray_hits_rect_and_polygon() {
        let l = WorldLayout::new(
            "mix",
            Bounds { w: 8.0, h: 8.0 },
            vec![
                Shape::rect(1.0, -0.5, 2.0, 0.5),
                Shape::Polygon {
                    vertices: vec![Point::new(-1.0, 1.0), Point::new(1.0, 1.0), Point::new(0.0, 2.0)],
                },
            ],
        )
        .unwrap();
        let east = l.cast_ray(Point::new(0.0, 0.0), 0.0, 0.0, 30.0).unwrap();
        assert!((east - 1.0).abs() < 1e-12);
        let north = l.cast_ray(Point::new(0.0, 0.0), std::f64::consts::FRAC_PI_2, 0.0, 30.0).unwrap();
        assert!((north - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disc_collision_cases() {
        let r = room8();
        assert!(!r.circle_collides(Point::new(0.0, 0.0), 0.25));
        assert!(r.circle_collides(Point::new(3.9, 0.0), 0.25));
    }

    #[test]
    fn gate_width_decides_passage() {
        // two wall pieces leaving a 0.55 m gap around x = 0
        let l = WorldLayout::new(
            "gate",
            Bounds { w: 8.0, h: 8.0 },
            vec![
                Shape::rect(-4.0, -0.05, -0.275, 0.05),
                Shape::rect(0.275, -0.05, 4.0, 0.05),
            ],
        )
        .unwrap();
        assert!(l.circle_collides(Point::new(0.0, 0.0), 0.3));
        assert!(!l.circle_collides(Point::new(0.0, 0.0), 0.25));
    }

    #[test]
    fn free_pose_sampling() {
        let r = room8();
        let p = r.sample_free_pose(0.3, 7).unwrap();
        assert!(!r.circle_collides(p, 0.3));
        assert_eq!(p, r.sample_free_pose(0.3, 7).unwrap());

        let blocked = WorldLayout::new("full", Bounds { w: 2.0, h: 2.0 }, vec![Shape::rect(-1.0, -1.0, 1.0, 1.0)]).unwrap();
        assert!(matches!(blocked.sample_free_pose(0.2, 1), Err(WorldError::NoFreeSpace { .. })));
        assert!(room8().sample_free_pose(5.0, 1).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let b = Bounds { w: 4.0, h: 4.0 };
        assert!(WorldLayout::new("x", b, vec![Shape::circle(0.0, 0.0, 0.0)]).is_err());
        assert!(WorldLayout::new("x", b, vec![Shape::circle(1.9, 0.0, 0.5)]).is_err());
        let bowtie = Shape::Polygon {
            vertices: vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
            ],
        };
        assert!(WorldLayout::new("x", b, vec![bowtie]).is_err());
        let concave = Shape::Polygon {
            vertices: vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.2, 0.2),
                Point::new(0.0, 1.0),
            ],
        };
        assert!(WorldLayout::new("x", b, vec![concave]).is_err());
        assert!(WorldLayout::new("x", Bounds { w: 0.0, h: 1.0 }, vec![]).is_err());
    }

    #[test]
    fn clockwise_polygon_is_accepted() {
        let cw = Shape::Polygon {
            vertices: vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)],
        };
        assert!(cw.contains(Point::new(0.2, 0.2)));
        assert!(!cw.contains(Point::new(0.8, 0.8)));
    }

    #[test]
    fn layout_json_round_trip_and_format_check() {
        let l = WorldLayout::resolve("env0").unwrap();
        let again = WorldLayout::from_json(&l.to_json()).unwrap();
        assert_eq!(l, again);
        let bumped = l.to_json().replace("\"format\": 1", "\"format\": 2");
        assert!(matches!(WorldLayout::from_json(&bumped), Err(WorldError::UnsupportedFormat(2))));
    }

    #[test]
    fn builtin_layouts_are_usable() {
        for name in WorldLayout::builtin_names() {
            let l = WorldLayout::resolve(name).unwrap();
            if *name != "gate" {
                assert!(!l.circle_collides(Point::new(0.0, 0.0), 0.3), "{name} origin blocked");
                assert_eq!(l.goal_points.len(), 4, "{name}");
                for g in &l.goal_points {
                    assert!(!l.circle_collides(*g, 0.3), "{name} goal {g:?} blocked");
                }
            }
        }
        assert!(matches!(WorldLayout::resolve("nope"), Err(WorldError::UnknownLayout(_))));
    }
}
