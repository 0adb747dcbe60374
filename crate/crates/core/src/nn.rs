//! Exact radius and nearest-neighbour queries over a dynamic point set.
//!
//! Points live in slots. A prefix of the slots is organised as an implicit,
//! median-split k-d tree; later insertions go to an unsorted tail that is
//! scanned linearly and folded into the tree once it grows past a fraction of
//! the tree size. Removals leave tombstones that are compacted away when they
//! outnumber the live entries.

use std::collections::HashMap;

use crate::error::{contract, Result};
use crate::space::distance;

const MIN_TAIL: usize = 48;

#[derive(Debug, Clone)]
pub struct PointIndex {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<usize>,
    alive: Vec<bool>,
    slot_of: HashMap<usize, usize>,
    /// Tree order over slots `[0, built)`; node of range `[lo, hi)` sits at the midpoint.
    order: Vec<usize>,
    split_axis: Vec<u8>,
    built: usize,
    dead: usize,
}

impl PointIndex {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0 && dim < 256, "unsupported dimension {dim}");
        Self {
            dim,
            coords: Vec::new(),
            ids: Vec::new(),
            alive: Vec::new(),
            slot_of: HashMap::new(),
            order: Vec::new(),
            split_axis: Vec::new(),
            built: 0,
            dead: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.slot_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_of.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.slot_of.contains_key(&id)
    }

    #[inline]
    fn point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return contract(format!("{}-D query against a {}-D index", x.len(), self.dim));
        }
        Ok(())
    }

    pub fn insert(&mut self, x: &[f64], id: usize) -> Result<()> {
        self.check_dim(x)?;
        if self.slot_of.contains_key(&id) {
            return contract(format!("id {id} is already indexed"));
        }
        let slot = self.ids.len();
        self.coords.extend_from_slice(x);
        self.ids.push(id);
        self.alive.push(true);
        self.slot_of.insert(id, slot);
        if self.ids.len() - self.built > MIN_TAIL + self.built / 8 {
            self.rebuild();
        }
        Ok(())
    }

    pub fn remove(&mut self, id: usize) -> Result<()> {
        let Some(slot) = self.slot_of.remove(&id) else {
            return contract(format!("id {id} is not indexed"));
        };
        self.alive[slot] = false;
        self.dead += 1;
        if self.dead > MIN_TAIL && self.dead > self.slot_of.len() {
            self.compact();
        }
        Ok(())
    }

    fn compact(&mut self) {
        let mut coords = Vec::with_capacity(self.slot_of.len() * self.dim);
        let mut ids = Vec::with_capacity(self.slot_of.len());
        for slot in 0..self.ids.len() {
            if self.alive[slot] {
                coords.extend_from_slice(self.point(slot));
                ids.push(self.ids[slot]);
            }
        }
        self.alive = vec![true; ids.len()];
        self.slot_of = ids.iter().enumerate().map(|(s, id)| (*id, s)).collect();
        self.coords = coords;
        self.ids = ids;
        self.dead = 0;
        self.rebuild();
    }

    fn rebuild(&mut self) {
        let n = self.ids.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut axes = vec![0u8; n];
        self.build_range(&mut order, &mut axes);
        self.order = order;
        self.split_axis = axes;
        self.built = n;
    }

    fn build_range(&self, order: &mut [usize], axes: &mut [u8]) {
        if order.len() <= 1 {
            return;
        }
        // split on the axis of widest spread
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for d in 0..self.dim {
            let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
                let v = self.coords[s * self.dim + d];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = d;
            }
        }
        let mid = order.len() / 2;
        let dim = self.dim;
        let coords = &self.coords;
        order.select_nth_unstable_by(mid, |a, b| {
            coords[a * dim + best_axis].total_cmp(&coords[b * dim + best_axis])
        });
        axes[mid] = best_axis as u8;
        let (left, rest) = order.split_at_mut(mid);
        let (left_axes, rest_axes) = axes.split_at_mut(mid);
        self.build_range(left, left_axes);
        self.build_range(&mut rest[1..], &mut rest_axes[1..]);
    }

    /// Ids of all entries within distance `r` of `x` (boundary inclusive).
    pub fn near(&self, x: &[f64], r: f64) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        if !(r >= 0.0) {
            return contract(format!("radius must be non-negative, got {r}"));
        }
        let mut out = Vec::new();
        self.near_range(0, self.built, x, r, &mut out);
        for slot in self.built..self.ids.len() {
            if self.alive[slot] && distance(self.point(slot), x) <= r {
                out.push(self.ids[slot]);
            }
        }
        Ok(out)
    }

    fn near_range(&self, lo: usize, hi: usize, x: &[f64], r: f64, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let slot = self.order[mid];
        let p = self.point(slot);
        if self.alive[slot] && distance(p, x) <= r {
            out.push(self.ids[slot]);
        }
        let axis = self.split_axis[mid] as usize;
        let diff = x[axis] - p[axis];
        if diff <= r {
            self.near_range(lo, mid, x, r, out);
        }
        if -diff <= r {
            self.near_range(mid + 1, hi, x, r, out);
        }
    }

    /// Id minimising the distance to `x`; ties go to the smallest id.
    pub fn nearest(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        if self.is_empty() {
            return contract("nearest query on an empty index");
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_range(0, self.built, x, &mut best);
        for slot in self.built..self.ids.len() {
            if self.alive[slot] {
                consider(&mut best, distance(self.point(slot), x), self.ids[slot]);
            }
        }
        Ok(best.1)
    }

    fn nearest_range(&self, lo: usize, hi: usize, x: &[f64], best: &mut (f64, usize)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let slot = self.order[mid];
        let p = self.point(slot);
        if self.alive[slot] {
            consider(best, distance(p, x), self.ids[slot]);
        }
        let axis = self.split_axis[mid] as usize;
        let diff = x[axis] - p[axis];
        let (first, second) = if diff <= 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.nearest_range(first.0, first.1, x, best);
        // equal plane distance may still hide a smaller id
        if diff.abs() <= best.0 {
            self.nearest_range(second.0, second.1, x, best);
        }
    }

    /// All live `(id, coords)` pairs in slot order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        (0..self.ids.len()).filter(|s| self.alive[*s]).map(|s| (self.ids[s], self.point(s)))
    }
}

#[inline]
fn consider(best: &mut (f64, usize), d: f64, id: usize) {
    if d < best.0 || (d == best.0 && id < best.1) {
        *best = (d, id);
    }
}
