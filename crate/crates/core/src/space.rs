//! States, worlds, paths and the geometric primitives every planner shares.
//!
//! A [`World`] is an axis-aligned bounding box with axis-aligned box obstacles.
//! Obstacles are closed sets: a state on an obstacle face is in collision.
//! Motions are checked by discrete interpolation at the world's collision step.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Collision resolution as a fraction of the largest bounds extent.
pub const DEFAULT_STEP_FRACTION: f64 = 0.002;

/// A point in the n-dimensional state space. Every coordinate is finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return contract("a state needs at least one coordinate");
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return contract(format!("non-finite coordinate {bad}"));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }

    /// Internal constructor for coordinates already known to be finite.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Debug for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for StateVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StateVec> for Vec<f64> {
    fn from(s: StateVec) -> Self {
        s.0
    }
}

/// Axis-aligned box, `lo[i] <= hi[i]` on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// The cube `[-half, half]^n`.
    pub fn centered_cube(n: usize, half: f64) -> Self {
        Self { lo: vec![-half; n], hi: vec![half; n] }
    }

    fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return contract(format!(
                "box corners have dimensions {} and {}",
                self.lo.len(),
                self.hi.len()
            ));
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return contract(format!("box axis {i} has a non-finite bound"));
            }
            if l > h {
                return contract(format!("box axis {i} has lo {l} > hi {h}"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Closed-set membership.
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .all(|((al, ah), (bl, bh))| al <= bh && bl <= ah)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn max_extent(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }

    /// Parameter interval `[t0, t1]` of the segment `a + t (b - a)` that lies in
    /// the box, clipped to `[0, 1]`. `None` when the segment misses the box.
    fn segment_interval(&self, a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for d in 0..a.len() {
            let delta = b[d] - a[d];
            if delta == 0.0 {
                if a[d] < self.lo[d] || a[d] > self.hi[d] {
                    return None;
                }
                continue;
            }
            let mut lo = (self.lo[d] - a[d]) / delta;
            let mut hi = (self.hi[d] - a[d]) / delta;
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Euclidean distance without dimension checks; callers guarantee equal lengths.
#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
}

/// L2 norm of `b - a`.
pub fn euclidean_distance(a: &StateVec, b: &StateVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return contract(format!("distance between {}-D and {}-D states", a.dim(), b.dim()));
    }
    Ok(distance(a, b))
}

/// Lebesgue measure of the n-dimensional unit ball, `pi^(n/2) / Gamma(n/2 + 1)`.
pub fn unit_ball_measure(n: usize) -> Result<f64> {
    if n == 0 {
        return contract("unit ball of dimension 0");
    }
    // V_n = V_{n-2} * 2 pi / n avoids evaluating Gamma directly.
    let (mut v, mut k) = if n.is_multiple_of(2) { (1.0, 0) } else { (2.0, 1) };
    while k < n {
        k += 2;
        v *= 2.0 * std::f64::consts::PI / k as f64;
    }
    Ok(v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WorldFile {
    dimension: usize,
    bounds: Aabb,
    #[serde(default)]
    obstacles: Vec<Aabb>,
    start: Vec<f64>,
    goal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collision_step: Option<f64>,
}

/// Bounds, obstacles, start and goal: the planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    dimension: usize,
    bounds: Aabb,
    obstacles: Vec<Aabb>,
    start: StateVec,
    goal: StateVec,
    collision_step: f64,
    explicit_step: bool,
}

impl World {
    pub fn new(bounds: Aabb, obstacles: Vec<Aabb>, start: StateVec, goal: StateVec) -> Result<Self> {
        let dimension = bounds.dim();
        let world = World {
            dimension,
            collision_step: DEFAULT_STEP_FRACTION * bounds.max_extent(),
            bounds,
            obstacles,
            start,
            goal,
            explicit_step: false,
        };
        world.validate().map_err(|(_, msg)| Error::Contract(msg))?;
        Ok(world)
    }

    /// `[-1, 1]^n` without obstacles.
    pub fn empty_cube(start: StateVec, goal: StateVec) -> Result<Self> {
        let n = start.dim();
        Self::new(Aabb::centered_cube(n, 1.0), Vec::new(), start, goal)
    }

    /// Overrides the interpolation spacing used by motion checks.
    pub fn with_collision_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return contract(format!("collision step must be positive, got {step}"));
        }
        self.collision_step = step;
        self.explicit_step = true;
        Ok(self)
    }

    /// Returns the failing field name alongside the message so the loader can
    /// point at a line.
    fn validate(&self) -> std::result::Result<(), (WorldField, String)> {
        let n = self.dimension;
        if n == 0 {
            return Err((WorldField::Dimension, "dimension must be positive".into()));
        }
        self.bounds.validate().map_err(|e| (WorldField::Bounds, e.to_string()))?;
        if self.bounds.dim() != n {
            return Err((
                WorldField::Bounds,
                format!("bounds have dimension {} but world is {n}-D", self.bounds.dim()),
            ));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            ob.validate().map_err(|e| (WorldField::Obstacle(i), e.to_string()))?;
            if ob.dim() != n {
                return Err((WorldField::Obstacle(i), format!("obstacle {i} has dimension {}", ob.dim())));
            }
            if !ob.intersects(&self.bounds) {
                return Err((WorldField::Obstacle(i), format!("obstacle {i} lies outside the bounds")));
            }
        }
        for (field, name, x) in [
            (WorldField::Start, "start", &self.start),
            (WorldField::Goal, "goal", &self.goal),
        ] {
            if x.dim() != n {
                return Err((field, format!("{name} has dimension {} but world is {n}-D", x.dim())));
            }
            if !self.bounds.contains(x) {
                return Err((field, format!("{name} {x:?} is outside the bounds")));
            }
            if self.obstacles.iter().any(|o| o.contains(x)) {
                return Err((field, format!("{name} {x:?} is in collision")));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Aabb] {
        &self.obstacles
    }

    pub fn start(&self) -> &StateVec {
        &self.start
    }

    pub fn goal(&self) -> &StateVec {
        &self.goal
    }

    pub fn collision_step(&self) -> f64 {
        self.collision_step
    }

    /// Product of the bounds' side lengths, used in place of the free-space measure.
    pub fn measure(&self) -> f64 {
        self.bounds.volume()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return contract(format!("{}-D state in a {}-D world", x.len(), self.dimension));
        }
        Ok(())
    }

    pub fn is_state_free(&self, x: &StateVec) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.state_free(x))
    }

    pub fn is_motion_free(&self, a: &StateVec, b: &StateVec, step: f64) -> Result<bool> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        if !(step > 0.0) || step.is_nan() {
            return contract(format!("collision step must be positive, got {step}"));
        }
        Ok(self.motion_free_with_step(a, b, step))
    }

    #[inline]
    pub(crate) fn state_free(&self, x: &[f64]) -> bool {
        self.bounds.contains(x) && !self.obstacles.iter().any(|o| o.contains(x))
    }

    /// Motion check at the world's own collision step.
    #[inline]
    pub(crate) fn motion_free(&self, a: &[f64], b: &[f64]) -> bool {
        self.motion_free_with_step(a, b, self.collision_step)
    }

    /// Every state `a + (i/k)(b - a)`, `k = ceil(|b - a| / step)`, must be free.
    ///
    /// The pair is put in lexicographic order first so that the same states are
    /// tested whichever endpoint the caller names first. Obstacles are screened
    /// with an exact slab test and only the interpolation indices inside a
    /// slightly widened parameter interval are tested pointwise.
    pub(crate) fn motion_free_with_step(&self, a: &[f64], b: &[f64], step: f64) -> bool {
        let (a, b) = if lex_less(b, a) { (b, a) } else { (a, b) };
        if !self.state_free(a) || !self.state_free(b) {
            return false;
        }
        let len = distance(a, b);
        if len == 0.0 {
            return true;
        }
        let k = (len / step).ceil().max(1.0) as usize;
        if k <= 1 {
            return true;
        }
        let kf = k as f64;
        let mut point = vec![0.0; a.len()];
        for ob in &self.obstacles {
            let Some((t0, t1)) = ob.segment_interval(a, b) else { continue };
            let slack = 1e-9;
            let first = (((t0 - slack) * kf).floor().max(1.0)) as usize;
            let last = (((t1 + slack) * kf).ceil() as usize).min(k - 1);
            for i in first..=last {
                let t = i as f64 / kf;
                for d in 0..a.len() {
                    point[d] = a[d] + (b[d] - a[d]) * t;
                }
                if ob.contains(&point) {
                    return false;
                }
            }
        }
        true
    }

    /// Parses the JSON world format, reporting invariant violations with the
    /// line of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| Error::WorldFormat {
            line: e.line(),
            message: e.to_string(),
        })?;
        let to_state = |v: Vec<f64>, field: WorldField| {
            StateVec::new(v).map_err(|e| Error::WorldFormat {
                line: field.locate(text),
                message: e.to_string(),
            })
        };
        let start = to_state(file.start, WorldField::Start)?;
        let goal = to_state(file.goal, WorldField::Goal)?;
        let mut world = World {
            dimension: file.dimension,
            collision_step: DEFAULT_STEP_FRACTION * file.bounds.max_extent(),
            bounds: file.bounds,
            obstacles: file.obstacles,
            start,
            goal,
            explicit_step: false,
        };
        world.validate().map_err(|(field, message)| Error::WorldFormat {
            line: field.locate(text),
            message,
        })?;
        if let Some(step) = file.collision_step {
            world = world.with_collision_step(step).map_err(|e| Error::WorldFormat {
                line: WorldField::CollisionStep.locate(text),
                message: e.to_string(),
            })?;
        }
        Ok(world)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = WorldFile {
            dimension: self.dimension,
            bounds: self.bounds.clone(),
            obstacles: self.obstacles.clone(),
            start: self.start.to_vec(),
            goal: self.goal.to_vec(),
            collision_step: self.explicit_step.then_some(self.collision_step),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("world serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum WorldField {
    Dimension,
    Bounds,
    Obstacle(usize),
    Start,
    Goal,
    CollisionStep,
}

impl WorldField {
    /// Best-effort 1-based line of the field in the source text.
    fn locate(self, text: &str) -> usize {
        let key_offset = |key: &str| text.find(&format!("\"{key}\""));
        let offset = match self {
            WorldField::Dimension => key_offset("dimension"),
            WorldField::Bounds => key_offset("bounds"),
            WorldField::Start => key_offset("start"),
            WorldField::Goal => key_offset("goal"),
            WorldField::CollisionStep => key_offset("collision_step"),
            WorldField::Obstacle(i) => key_offset("obstacles").and_then(|base| {
                text[base..]
                    .match_indices("\"lo\"")
                    .nth(i)
                    .map(|(off, _)| base + off)
            }),
        };
        offset.map_or(1, |o| text[..o].matches('\n').count() + 1)
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// A polygonal path from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<StateVec>,
    pub cost: f64,
}

impl Path {
    /// Builds a path whose cost is the polyline length of `waypoints`.
    pub fn from_waypoints(waypoints: Vec<StateVec>) -> Self {
        let cost = polyline_length(&waypoints);
        Self { waypoints, cost }
    }

    /// Checks the start/goal endpoints and every segment against `world`.
    pub fn is_valid_in(&self, world: &World) -> bool {
        let (Some(first), Some(last)) = (self.waypoints.first(), self.waypoints.last()) else {
            return false;
        };
        first == world.start()
            && last == world.goal()
            && self.waypoints.windows(2).all(|w| world.motion_free(&w[0], &w[1]))
    }
}

pub fn polyline_length(waypoints: &[StateVec]) -> f64 {
    waypoints.windows(2).map(|w| distance(&w[0], &w[1])).sum()
}
