//! Seeded uniform sampling and direct sampling of the informed set.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded from a `u64` through
//! `SeedableRng::seed_from_u64`. ChaCha output is specified bit-for-bit, so a
//! seed reproduces the same stream on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Result};
use crate::space::{distance, unit_ball_measure, Aabb, StateVec};

/// A deterministic random stream owned by one planner run.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for trial `index` of a run seeded with `master`.
    pub fn derive(master: u64, index: u64) -> Self {
        Self::new(derive_seed(master, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// SplitMix64 finalizer over `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Each coordinate independently uniform in `[lo[i], hi[i]]`.
pub fn sample_uniform(bounds: &Aabb, rng: &mut RngStream) -> StateVec {
    let coords = bounds
        .lo
        .iter()
        .zip(&bounds.hi)
        .map(|(l, h)| l + (h - l) * rng.unit())
        .collect();
    StateVec::from_vec_unchecked(coords)
}

/// Uniform point in the unit n-ball: Gaussian direction, radius `u^(1/n)`.
pub fn sample_unit_ball(n: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let radius = rng.unit().powf(1.0 / n as f64);
        let scale = radius / norm;
        v.iter_mut().for_each(|x| *x *= scale);
        return v;
    }
}

/// Row-major n x n orthonormal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    n: usize,
    data: Vec<f64>,
}

impl Rotation {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, col)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let row = &self.data[r * self.n..(r + 1) * self.n];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

/// Orthonormal matrix whose first column is the unit vector from `x_start` to
/// `x_goal`, completed with a Householder reflection.
///
/// With `u` the unit direction, the reflector `I - 2 v v^T / v^T v` swaps `e1`
/// and `u` for `v = u - e1`, and sends `e1` to `-u` for `v = u + e1`. The
/// variant without cancellation is chosen by the sign of `u[0]`, and a single
/// column sign flip restores determinant +1. In one dimension a start above
/// the goal leaves the 1x1 matrix `[-1]`.
pub fn transverse_rotation(x_start: &StateVec, x_goal: &StateVec) -> Result<Rotation> {
    if x_start.dim() != x_goal.dim() {
        return contract("foci have different dimensions");
    }
    let n = x_start.dim();
    let len = distance(x_start, x_goal);
    if len == 0.0 {
        return contract("coincident foci have no transverse axis");
    }
    let u: Vec<f64> = x_start.iter().zip(x_goal.iter()).map(|(a, b)| (b - a) / len).collect();
    if n == 1 {
        return Ok(Rotation { n, data: vec![u[0].signum()] });
    }

    let positive = u[0] >= 0.0;
    let mut v = u.clone();
    v[0] += if positive { 1.0 } else { -1.0 };
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut data = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let id = if r == c { 1.0 } else { 0.0 };
            data[r * n + c] = id - 2.0 * v[r] * v[c] / vv;
        }
    }
    // positive: H e1 = -u, so negate column 0. negative: H e1 = u with det -1,
    // so negate the last column.
    let flip = if positive { 0 } else { n - 1 };
    for r in 0..n {
        data[r * n + flip] = -data[r * n + flip];
    }
    Ok(Rotation { n, data })
}

/// The informed set for path length: `{x : |x - a| + |x - b| <= c_best}`.
#[derive(Debug, Clone)]
pub struct ProlateHyperspheroid {
    focus_a: StateVec,
    focus_b: StateVec,
    centre: Vec<f64>,
    c_min: f64,
    c_best: f64,
    rotation: Rotation,
    /// Informed draws rejected for falling outside the world bounds.
    pub bounds_rejections: u64,
}

impl ProlateHyperspheroid {
    pub fn new(focus_a: StateVec, focus_b: StateVec, c_best: f64) -> Result<Self> {
        let rotation = transverse_rotation(&focus_a, &focus_b)?;
        let c_min = distance(&focus_a, &focus_b);
        let centre = focus_a.iter().zip(focus_b.iter()).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut phs = Self {
            focus_a,
            focus_b,
            centre,
            c_min,
            c_best: f64::INFINITY,
            rotation,
            bounds_rejections: 0,
        };
        phs.set_cost(c_best)?;
        Ok(phs)
    }

    /// Updates the transverse diameter. Values within rounding of `c_min` are snapped to it.
    pub fn set_cost(&mut self, c_best: f64) -> Result<()> {
        if c_best.is_nan() {
            return contract("NaN solution cost");
        }
        if c_best < self.c_min {
            if self.c_min - c_best > 1e-12 * self.c_min.max(1.0) {
                return contract(format!("c_best {c_best} is below c_min {}", self.c_min));
            }
            self.c_best = self.c_min;
        } else {
            self.c_best = c_best;
        }
        Ok(())
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_best(&self) -> f64 {
        self.c_best
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn dim(&self) -> usize {
        self.focus_a.dim()
    }

    /// Sum of distances to the foci.
    pub fn focal_sum(&self, x: &[f64]) -> f64 {
        distance(x, &self.focus_a) + distance(x, &self.focus_b)
    }

    fn conjugate_radius(&self) -> f64 {
        let c2 = self.c_best * self.c_best - self.c_min * self.c_min;
        0.5 * c2.max(0.0).sqrt()
    }

    /// Lebesgue measure of the spheroid.
    pub fn measure(&self) -> Result<f64> {
        if !self.c_best.is_finite() {
            return contract("an unbounded informed set has no finite measure");
        }
        let n = self.dim();
        Ok(unit_ball_measure(n)? * 0.5 * self.c_best * self.conjugate_radius().powi(n as i32 - 1))
    }

    /// Maps a point of the unit ball into the spheroid.
    pub fn from_unit_ball(&self, ball: &[f64]) -> Vec<f64> {
        let conj = self.conjugate_radius();
        let scaled: Vec<f64> = ball
            .iter()
            .enumerate()
            .map(|(i, x)| x * if i == 0 { 0.5 * self.c_best } else { conj })
            .collect();
        let mut out = self.rotation.apply(&scaled);
        out.iter_mut().zip(&self.centre).for_each(|(o, c)| *o += c);
        out
    }

    /// Uniform over the spheroid intersected with `bounds`, or uniform over
    /// `bounds` while `c_best` is infinite.
    pub fn sample(&mut self, bounds: &Aabb, rng: &mut RngStream) -> StateVec {
        if !self.c_best.is_finite() {
            return sample_uniform(bounds, rng);
        }
        loop {
            let ball = sample_unit_ball(self.dim(), rng);
            let x = self.from_unit_ball(&ball);
            if bounds.contains(&x) {
                return StateVec::from_vec_unchecked(x);
            }
            self.bounds_rejections += 1;
        }
    }
}

/// Lebesgue measure of the spheroid with diameters `c_best` and `sqrt(c_best^2 - c_min^2)`.
pub fn phs_measure(c_best: f64, c_min: f64, n: usize) -> Result<f64> {
    if !c_best.is_finite() {
        return contract("an unbounded informed set has no finite measure");
    }
    if c_best < c_min {
        return contract(format!("c_best {c_best} is below c_min {c_min}"));
    }
    let conj = 0.5 * (c_best * c_best - c_min * c_min).sqrt();
    Ok(unit_ball_measure(n)? * 0.5 * c_best * conj.powi(n as i32 - 1))
}
