//! Batch Informed Trees.
//!
//! The planner keeps an explicit tree rooted at the start and a set of
//! unconnected samples that, together with the current radius, define an
//! implicit r-disc random geometric graph. Each batch adds samples drawn from
//! the informed set, shrinks the radius, and then searches the implicit graph
//! in order of estimated solution cost through each edge. Searching stops for
//! the batch once no queued edge can improve the current solution.
//!
//! Queue policy: both queues are binary heaps keyed at insertion time.
//! A vertex whose cost-to-come drops while it waits for expansion is pushed
//! again and the outdated entry is skipped. An edge whose source cost changed
//! after insertion is re-keyed and pushed back when it reaches the top.
//! Edges that can no longer improve their target are dropped as they are
//! popped, before any collision check.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::nn::PointIndex;
use crate::planner::{Budget, EventLog, EventSink, Planner, PlannerResult, PlannerStats};
use crate::sampling::{ProlateHyperspheroid, RngStream};
use crate::space::{distance, unit_ball_measure, Path, StateVec, World};

/// `2 eta (1 + 1/n)^(1/n) (measure / zeta_n)^(1/n) (ln q / q)^(1/n)`.
pub fn radius(q: usize, n: usize, eta: f64, measure: f64) -> Result<f64> {
    if q < 2 {
        return contract(format!("radius needs at least two states, got {q}"));
    }
    if !(measure > 0.0) || !measure.is_finite() {
        return contract(format!("measure must be positive and finite, got {measure}"));
    }
    let nf = n as f64;
    let qf = q as f64;
    let inv = 1.0 / nf;
    Ok(2.0
        * eta
        * (1.0 + inv).powf(inv)
        * (measure / unit_ball_measure(n)?).powf(inv)
        * (qf.ln() / qf).powf(inv))
}

/// Lexicographic edge key: solution estimate through the edge, then source cost-to-come.
#[inline]
pub fn edge_key(source_cost: f64, edge_estimate: f64, target_cost_to_go: f64) -> (f64, f64) {
    (source_cost + edge_estimate + target_cost_to_go, source_cost)
}

#[inline]
pub fn vertex_key(cost: f64, cost_to_go: f64) -> f64 {
    cost + cost_to_go
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub samples_per_batch: usize,
    pub rgg_eta: f64,
    /// Prune only after the solution improves by more than this fraction since the last prune.
    pub prune_threshold_fraction: f64,
    /// Overrides the world's collision step when set.
    pub collision_step: Option<f64>,
    pub seed: u64,
    /// Track duplicate insertions/processing and queue-order violations.
    pub instrument: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            samples_per_batch: 100,
            rgg_eta: 1.1,
            prune_threshold_fraction: 0.01,
            collision_step: None,
            seed: 0,
            instrument: false,
        }
    }
}

impl PlannerConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_batch == 0 {
            return contract("samples_per_batch must be positive");
        }
        if !(self.rgg_eta >= 1.0) {
            return contract(format!("rgg_eta must be >= 1, got {}", self.rgg_eta));
        }
        if !(0.0..1.0).contains(&self.prune_threshold_fraction) {
            return contract(format!(
                "prune_threshold_fraction must be in [0, 1), got {}",
                self.prune_threshold_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateStatus {
    Sample,
    Vertex,
    Discarded,
}

#[derive(Debug, Clone)]
struct Node {
    coords: StateVec,
    g_hat: f64,
    h_hat: f64,
    status: StateStatus,
    parent: Option<usize>,
    edge_cost: f64,
    cost: f64,
    children: Vec<usize>,
    /// In the tree when the current batch started.
    old: bool,
    /// Waiting in the vertex queue.
    queued: bool,
}

impl Node {
    fn f_hat(&self) -> f64 {
        self.g_hat + self.h_hat
    }
}

#[derive(Debug, Clone, Copy)]
struct EdgeEntry {
    key: f64,
    source_cost: f64,
    source: usize,
    target: usize,
}

impl PartialEq for EdgeEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for EdgeEntry {}
impl PartialOrd for EdgeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for EdgeEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.source_cost.total_cmp(&other.source_cost))
            .then(self.source.cmp(&other.source))
            .then(self.target.cmp(&other.target))
    }
}

#[derive(Debug, Clone, Copy)]
struct VertexEntry {
    key: f64,
    cost: f64,
    vertex: usize,
}

impl PartialEq for VertexEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for VertexEntry {}
impl PartialOrd for VertexEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for VertexEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(self.vertex.cmp(&other.vertex))
    }
}

/// What happened to the edge popped by [`BitStar::process_best_edge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOutcome {
    /// The edge joined an unconnected sample to the tree.
    Expanded,
    /// The edge replaced the target's parent.
    Rewired,
    /// The edge failed the true-cost or cost-to-come test.
    Rejected,
    /// The edge could no longer improve its target and was dropped unprocessed.
    Dropped,
    /// The source cost changed since insertion; the edge was re-keyed.
    Requeued,
    /// Nothing left that can improve the solution: both queues were cleared.
    BatchEnd,
}

pub struct BitStar {
    world: World,
    config: PlannerConfig,
    rng: RngStream,
    informed: ProlateHyperspheroid,
    nodes: Vec<Node>,
    samples: PointIndex,
    vertices: PointIndex,
    edge_queue: BinaryHeap<Reverse<EdgeEntry>>,
    vertex_queue: BinaryHeap<Reverse<VertexEntry>>,
    pending_vertices: usize,
    radius: f64,
    c_best: f64,
    last_prune_cost: f64,
    batch: u64,
    stats: PlannerStats,
    log: EventLog,
    started: Instant,
    inserted_this_batch: HashSet<(usize, usize)>,
    processed_this_batch: HashSet<(usize, usize)>,
}

const START: usize = 0;
const GOAL: usize = 1;

impl BitStar {
    pub fn new(world: World, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        let world = match config.collision_step {
            Some(step) => world.with_collision_step(step)?,
            None => world,
        };
        if world.start() == world.goal() {
            return contract("start and goal coincide");
        }
        let n = world.dimension();
        let informed = ProlateHyperspheroid::new(world.start().clone(), world.goal().clone(), f64::INFINITY)?;
        let started = Instant::now();
        let mut planner = Self {
            rng: RngStream::new(config.seed),
            informed,
            nodes: Vec::new(),
            samples: PointIndex::new(n),
            vertices: PointIndex::new(n),
            edge_queue: BinaryHeap::new(),
            vertex_queue: BinaryHeap::new(),
            pending_vertices: 0,
            radius: f64::INFINITY,
            c_best: f64::INFINITY,
            last_prune_cost: f64::INFINITY,
            batch: 0,
            stats: PlannerStats::default(),
            log: EventLog::new(started),
            started,
            inserted_this_batch: HashSet::new(),
            processed_this_batch: HashSet::new(),
            config,
            world,
        };
        let start = planner.world.start().clone();
        let goal = planner.world.goal().clone();
        let s = planner.add_node(start, StateStatus::Vertex);
        planner.nodes[s].cost = 0.0;
        let g = planner.add_node(goal, StateStatus::Sample);
        debug_assert_eq!((s, g), (START, GOAL));
        Ok(planner)
    }

    fn add_node(&mut self, coords: StateVec, status: StateStatus) -> usize {
        let id = self.nodes.len();
        let g_hat = distance(&coords, self.world.start());
        let h_hat = distance(&coords, self.world.goal());
        let index = match status {
            StateStatus::Vertex => &mut self.vertices,
            _ => &mut self.samples,
        };
        index.insert(&coords, id).expect("fresh id");
        self.nodes.push(Node {
            coords,
            g_hat,
            h_hat,
            status,
            parent: None,
            edge_cost: 0.0,
            cost: f64::INFINITY,
            children: Vec::new(),
            old: false,
            queued: false,
        });
        id
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn best_cost(&self) -> f64 {
        self.c_best
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn batch(&self) -> u64 {
        self.batch
    }

    pub fn stats(&self) -> &PlannerStats {
        &self.stats
    }

    pub fn start_id(&self) -> usize {
        START
    }

    pub fn goal_id(&self) -> usize {
        GOAL
    }

    pub fn status(&self, id: usize) -> StateStatus {
        self.nodes[id].status
    }

    pub fn coords(&self, id: usize) -> &StateVec {
        &self.nodes[id].coords
    }

    /// Cost-to-come through the tree; infinite for anything not in it.
    pub fn cost_to_come(&self, id: usize) -> f64 {
        self.nodes[id].cost
    }

    pub fn cost_to_come_estimate(&self, id: usize) -> f64 {
        self.nodes[id].g_hat
    }

    pub fn cost_to_go_estimate(&self, id: usize) -> f64 {
        self.nodes[id].h_hat
    }

    pub fn f_hat(&self, id: usize) -> f64 {
        self.nodes[id].f_hat()
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn is_old(&self, id: usize) -> bool {
        self.nodes[id].old
    }

    pub fn is_queued(&self, id: usize) -> bool {
        self.nodes[id].queued
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn vertex_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.vertices.entries().map(|(id, _)| id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn sample_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.samples.entries().map(|(id, _)| id).collect();
        ids.sort_unstable();
        ids
    }

    /// Every state in the implicit graph (tree vertices and unconnected samples), by id.
    pub fn graph_states(&self) -> Vec<(usize, StateVec)> {
        let mut ids = self.vertex_ids();
        ids.extend(self.sample_ids());
        ids.sort_unstable();
        ids.into_iter().map(|id| (id, self.nodes[id].coords.clone())).collect()
    }

    pub fn edge_queue_len(&self) -> usize {
        self.edge_queue.len()
    }

    /// Number of vertices still waiting for expansion in this batch.
    pub fn pending_vertices(&self) -> usize {
        self.pending_vertices
    }

    /// True when neither queue holds work, i.e. the next iteration starts a batch.
    pub fn queues_empty(&self) -> bool {
        self.edge_queue.is_empty() && self.pending_vertices == 0
    }

    /// Key of the edge `(v, x)` given the current tree.
    pub fn edge_key(&self, v: usize, x: usize) -> (f64, f64) {
        let c_hat = distance(&self.nodes[v].coords, &self.nodes[x].coords);
        edge_key(self.nodes[v].cost, c_hat, self.nodes[x].h_hat)
    }

    pub fn vertex_key(&self, v: usize) -> f64 {
        vertex_key(self.nodes[v].cost, self.nodes[v].h_hat)
    }

    fn informed_measure(&self) -> f64 {
        let world = self.world.measure();
        if self.c_best.is_finite() {
            self.informed.measure().map_or(world, |m| m.min(world))
        } else {
            world
        }
    }

    /// Prunes (when the solution improved enough), adds a batch of samples,
    /// marks every vertex old, requeues all vertices and updates the radius.
    pub fn new_batch(&mut self) {
        self.begin_batch();
        for _ in 0..self.config.samples_per_batch {
            let x = loop {
                let x = self.informed.sample(self.world.bounds(), &mut self.rng);
                self.stats.state_checks += 1;
                if self.world.state_free(&x) {
                    break x;
                }
                self.stats.samples_in_collision += 1;
            };
            self.stats.samples_generated += 1;
            self.add_node(x, StateStatus::Sample);
        }
        self.stats.informed_rejections = self.informed.bounds_rejections;
        self.requeue_all();
    }

    /// Like [`BitStar::new_batch`], but adds `samples` instead of random draws.
    pub fn new_batch_with(&mut self, samples: &[StateVec]) -> Result<()> {
        if !self.queues_empty() {
            return contract("a batch can only start once both queues are empty");
        }
        for x in samples {
            if x.dim() != self.world.dimension() || !self.world.state_free(x) {
                return contract(format!("sample {x:?} is not a free state of this world"));
            }
        }
        self.begin_batch();
        for x in samples {
            self.stats.samples_generated += 1;
            self.add_node(x.clone(), StateStatus::Sample);
        }
        self.requeue_all();
        Ok(())
    }

    fn begin_batch(&mut self) {
        self.batch += 1;
        self.stats.batches += 1;
        self.clear_queues();
        self.inserted_this_batch.clear();
        self.processed_this_batch.clear();

        // the first solution always prunes; later ones only after a large enough improvement
        if self.c_best.is_finite()
            && (self.last_prune_cost.is_infinite()
                || self.last_prune_cost - self.c_best > self.config.prune_threshold_fraction * self.last_prune_cost)
        {
            self.prune(self.c_best);
        }
    }

    fn requeue_all(&mut self) {
        for (id, _) in self.vertices.entries() {
            let node = &mut self.nodes[id];
            node.old = true;
            node.queued = true;
            self.vertex_queue.push(Reverse(VertexEntry {
                key: vertex_key(node.cost, node.h_hat),
                cost: node.cost,
                vertex: id,
            }));
        }
        self.pending_vertices = self.vertices.len();

        let q = self.vertices.len() + self.samples.len();
        self.radius = radius(q, self.world.dimension(), self.config.rgg_eta, self.informed_measure())
            .expect("q >= 2 and a positive measure");
    }

    fn clear_queues(&mut self) {
        self.edge_queue.clear();
        self.vertex_queue.clear();
        if self.pending_vertices > 0 {
            for node in &mut self.nodes {
                node.queued = false;
            }
        }
        self.pending_vertices = 0;
    }

    /// Drops outdated entries from the top of the vertex queue and returns the best live one.
    fn peek_vertex(&mut self) -> Option<VertexEntry> {
        while let Some(Reverse(top)) = self.vertex_queue.peek() {
            let node = &self.nodes[top.vertex];
            if node.queued && node.status == StateStatus::Vertex && node.cost == top.cost {
                return Some(*top);
            }
            self.vertex_queue.pop();
        }
        None
    }

    fn best_edge_value(&self) -> f64 {
        self.edge_queue.peek().map_or(f64::INFINITY, |Reverse(e)| e.key)
    }

    /// Best vertex-queue value, infinite when no vertex waits for expansion.
    pub fn best_vertex_value(&mut self) -> f64 {
        self.peek_vertex().map_or(f64::INFINITY, |e| e.key)
    }

    /// Expands vertices while the best of them could beat the best queued edge.
    pub fn expand_promising_vertices(&mut self) {
        while let Some(top) = self.peek_vertex() {
            if top.key <= self.best_edge_value() {
                self.vertex_queue.pop();
                self.expand(top.vertex);
            } else {
                break;
            }
        }
    }

    /// Removes `v` from the vertex queue and queues its outgoing edges.
    pub fn expand_vertex(&mut self, v: usize) -> Result<()> {
        if v >= self.nodes.len() || !self.nodes[v].queued {
            return contract(format!("state {v} is not waiting in the vertex queue"));
        }
        self.expand(v);
        Ok(())
    }

    fn expand(&mut self, v: usize) {
        let node = &mut self.nodes[v];
        node.queued = false;
        self.pending_vertices -= 1;
        self.stats.vertex_expansions += 1;

        let (v_g_hat, v_cost, v_old) = (node.g_hat, node.cost, node.old);
        let v_coords = node.coords.clone();
        let near_samples = self.samples.near(&v_coords, self.radius).expect("matching dimension");
        for x in near_samples {
            let c_hat = distance(&v_coords, &self.nodes[x].coords);
            if v_g_hat + c_hat + self.nodes[x].h_hat < self.c_best {
                self.push_edge(v, x, c_hat);
            }
        }

        if !v_old {
            let near_vertices = self.vertices.near(&v_coords, self.radius).expect("matching dimension");
            for w in near_vertices {
                if w == v || self.nodes[w].parent == Some(v) {
                    continue;
                }
                let target = &self.nodes[w];
                let c_hat = distance(&v_coords, &target.coords);
                if v_g_hat + c_hat + target.h_hat < self.c_best && v_cost + c_hat < target.cost {
                    self.push_edge(v, w, c_hat);
                }
            }
        }
    }

    fn push_edge(&mut self, v: usize, x: usize, c_hat: f64) {
        let source_cost = self.nodes[v].cost;
        let (key, _) = edge_key(source_cost, c_hat, self.nodes[x].h_hat);
        self.edge_queue.push(Reverse(EdgeEntry { key, source_cost, source: v, target: x }));
        self.stats.edges_queued += 1;
        if self.config.instrument && !self.inserted_this_batch.insert((v, x)) {
            self.stats.duplicate_edge_insertions += 1;
        }
    }

    /// Pops the best edge and runs it through the three acceptance tests.
    pub fn process_best_edge(&mut self, sink: &mut EventSink<'_>) -> EdgeOutcome {
        let Some(Reverse(entry)) = self.edge_queue.pop() else {
            self.clear_queues();
            return EdgeOutcome::BatchEnd;
        };
        let (v, x) = (entry.source, entry.target);
        let v_cost = self.nodes[v].cost;
        let c_hat = distance(&self.nodes[v].coords, &self.nodes[x].coords);

        if self.nodes[v].status != StateStatus::Vertex {
            return EdgeOutcome::Dropped;
        }
        // entries (., x) that cannot lower the target's cost-to-come leave the queue
        if self.nodes[x].status == StateStatus::Vertex && v_cost + c_hat >= self.nodes[x].cost {
            return EdgeOutcome::Dropped;
        }
        if (entry.source_cost - v_cost).abs() > 1e-12 {
            let (key, _) = edge_key(v_cost, c_hat, self.nodes[x].h_hat);
            self.edge_queue.push(Reverse(EdgeEntry { key, source_cost: v_cost, ..entry }));
            return EdgeOutcome::Requeued;
        }

        if self.config.instrument {
            if !self.processed_this_batch.insert((v, x)) {
                self.stats.duplicate_edge_processing += 1;
            }
            if entry.key > self.best_vertex_value() {
                self.stats.dominance_violations += 1;
            }
        }
        self.stats.edges_processed += 1;
        self.stats.iterations += 1;

        let h_x = self.nodes[x].h_hat;
        if v_cost + c_hat + h_x >= self.c_best {
            self.clear_queues();
            return EdgeOutcome::BatchEnd;
        }
        // path length: the true cost equals the estimate unless the motion collides
        if self.nodes[v].g_hat + c_hat + h_x >= self.c_best {
            return EdgeOutcome::Rejected;
        }
        self.stats.motion_checks += 1;
        if !self.world.motion_free(&self.nodes[v].coords, &self.nodes[x].coords) {
            return EdgeOutcome::Rejected;
        }
        let edge_cost = c_hat;
        if v_cost + edge_cost >= self.nodes[x].cost {
            return EdgeOutcome::Rejected;
        }

        let outcome = if self.nodes[x].status == StateStatus::Vertex {
            let old_parent = self.nodes[x].parent.expect("non-root vertices have parents");
            self.nodes[old_parent].children.retain(|c| *c != x);
            self.stats.rewirings += 1;
            EdgeOutcome::Rewired
        } else {
            self.samples.remove(x).expect("unconnected sample is indexed");
            self.vertices.insert(&self.nodes[x].coords, x).expect("fresh vertex");
            let node = &mut self.nodes[x];
            node.status = StateStatus::Vertex;
            node.old = false;
            node.queued = true;
            self.pending_vertices += 1;
            EdgeOutcome::Expanded
        };
        self.nodes[x].parent = Some(v);
        self.nodes[x].edge_cost = edge_cost;
        self.nodes[v].children.push(x);
        self.set_cost(x, v_cost + edge_cost);

        let goal_cost = self.nodes[GOAL].cost;
        if goal_cost < self.c_best {
            self.c_best = goal_cost;
            self.informed.set_cost(goal_cost).expect("solution costs are at least c_min");
            self.log.offer(goal_cost, sink);
        }
        outcome
    }

    /// Sets `x`'s cost-to-come and propagates the change through its subtree.
    fn set_cost(&mut self, x: usize, cost: f64) {
        self.nodes[x].cost = cost;
        self.requeue_if_waiting(x);
        let mut stack: Vec<usize> = self.nodes[x].children.clone();
        while let Some(c) = stack.pop() {
            let parent = self.nodes[c].parent.expect("child has a parent");
            self.nodes[c].cost = self.nodes[parent].cost + self.nodes[c].edge_cost;
            self.requeue_if_waiting(c);
            stack.extend_from_slice(&self.nodes[c].children);
        }
    }

    fn requeue_if_waiting(&mut self, id: usize) {
        let node = &self.nodes[id];
        if node.queued {
            self.vertex_queue.push(Reverse(VertexEntry {
                key: vertex_key(node.cost, node.h_hat),
                cost: node.cost,
                vertex: id,
            }));
        }
    }

    /// Removes states that cannot lie on a solution better than `c`.
    ///
    /// Samples with `f_hat >= c` and vertices with `f_hat > c` go away.
    /// Descendants cut off from the root return to the sample set when
    /// `f_hat < c` and are discarded otherwise.
    pub fn prune(&mut self, c: f64) {
        self.stats.prunes += 1;
        self.last_prune_cost = c;

        let doomed_samples: Vec<usize> =
            self.samples.entries().filter(|(id, _)| self.nodes[*id].f_hat() >= c).map(|(id, _)| id).collect();
        for id in doomed_samples {
            self.samples.remove(id).expect("indexed sample");
            self.nodes[id].status = StateStatus::Discarded;
            self.stats.pruned_states += 1;
        }

        let doomed: HashSet<usize> =
            self.vertices.entries().filter(|(id, _)| self.nodes[*id].f_hat() > c).map(|(id, _)| id).collect();
        let mut roots: Vec<usize> = doomed
            .iter()
            .copied()
            .filter(|id| self.nodes[*id].parent.is_none_or(|p| !doomed.contains(&p)))
            .collect();
        roots.sort_unstable();
        for &r in &roots {
            if let Some(p) = self.nodes[r].parent {
                self.nodes[p].children.retain(|ch| *ch != r);
            }
        }
        let mut stack = roots;
        while let Some(id) = stack.pop() {
            let children = std::mem::take(&mut self.nodes[id].children);
            stack.extend(children);
            self.vertices.remove(id).expect("indexed vertex");
            let keep = !doomed.contains(&id) && self.nodes[id].f_hat() < c;
            let node = &mut self.nodes[id];
            node.parent = None;
            node.cost = f64::INFINITY;
            node.edge_cost = 0.0;
            node.queued = false;
            node.old = false;
            if keep {
                node.status = StateStatus::Sample;
                self.samples.insert(&self.nodes[id].coords, id).expect("fresh sample");
            } else {
                node.status = StateStatus::Discarded;
                self.stats.pruned_states += 1;
            }
        }
    }

    /// One pass of the main loop: start a batch if both queues are empty,
    /// expand promising vertices and process the best edge.
    pub fn iterate(&mut self, sink: &mut EventSink<'_>) -> EdgeOutcome {
        if self.queues_empty() {
            self.new_batch();
        }
        self.expand_promising_vertices();
        self.process_best_edge(sink)
    }

    /// Iterates until the current (or, with empty queues, the next) batch ends.
    pub fn run_batch(&mut self, sink: &mut EventSink<'_>) {
        if self.queues_empty() {
            self.new_batch();
        }
        while !self.queues_empty() {
            self.expand_promising_vertices();
            if self.process_best_edge(sink) == EdgeOutcome::BatchEnd {
                return;
            }
        }
    }

    /// Start-to-goal path through the tree.
    pub fn extract_path(&self) -> Result<Path> {
        if !self.nodes[GOAL].cost.is_finite() {
            return contract("the goal is not connected to the tree");
        }
        let mut waypoints = vec![self.nodes[GOAL].coords.clone()];
        let mut at = GOAL;
        while let Some(p) = self.nodes[at].parent {
            waypoints.push(self.nodes[p].coords.clone());
            at = p;
        }
        waypoints.reverse();
        Ok(Path { waypoints, cost: self.nodes[GOAL].cost })
    }

    /// Checks that parent links form a tree rooted at the start and that every
    /// cached cost-to-come matches its parent chain.
    pub fn check_tree(&self) -> std::result::Result<(), String> {
        if self.nodes[START].cost != 0.0 || self.nodes[START].parent.is_some() {
            return Err("root must have cost 0 and no parent".into());
        }
        for (id, _) in self.vertices.entries() {
            let node = &self.nodes[id];
            if node.status != StateStatus::Vertex {
                return Err(format!("indexed vertex {id} has status {:?}", node.status));
            }
            if node.cost < node.g_hat - 1e-12 {
                return Err(format!("vertex {id} cost {} below its admissible estimate {}", node.cost, node.g_hat));
            }
            let mut hops = 0;
            let mut at = id;
            let mut chain_cost = 0.0;
            let mut chain = Vec::new();
            while let Some(p) = self.nodes[at].parent {
                chain.push(self.nodes[at].edge_cost);
                if self.nodes[p].status != StateStatus::Vertex {
                    return Err(format!("vertex {at} has non-vertex parent {p}"));
                }
                at = p;
                hops += 1;
                if hops > self.nodes.len() {
                    return Err(format!("cycle through vertex {id}"));
                }
            }
            if at != START {
                return Err(format!("vertex {id} is not connected to the root"));
            }
            for c in chain.iter().rev() {
                chain_cost += c;
            }
            if (chain_cost - node.cost).abs() > 1e-12 {
                return Err(format!("vertex {id} caches {} but its chain sums to {chain_cost}", node.cost));
            }
            if let Some(p) = node.parent {
                let true_len = distance(&self.nodes[p].coords, &node.coords);
                if (true_len - node.edge_cost).abs() > 1e-12 {
                    return Err(format!("edge into {id} stores {} for a length of {true_len}", node.edge_cost));
                }
                if !self.nodes[p].children.contains(&id) {
                    return Err(format!("parent {p} does not list child {id}"));
                }
            }
        }
        for (id, _) in self.samples.entries() {
            let node = &self.nodes[id];
            if node.status != StateStatus::Sample || node.parent.is_some() || node.cost.is_finite() {
                return Err(format!("sample {id} carries tree state"));
            }
        }
        let goal = self.nodes[GOAL].status;
        if goal == StateStatus::Discarded {
            return Err("goal was discarded".into());
        }
        Ok(())
    }

    fn finish(&self) -> PlannerResult {
        PlannerResult {
            path: self.extract_path().ok(),
            events: self.log.events.clone(),
            stats: self.stats.clone(),
            elapsed: self.started.elapsed(),
        }
    }
}

impl Planner for BitStar {
    fn name(&self) -> &'static str {
        "bitstar"
    }

    fn solve(&mut self, budget: &Budget, sink: &mut EventSink<'_>) -> PlannerResult {
        if budget.is_zero() {
            return PlannerResult::default();
        }
        loop {
            if budget.time_exhausted(self.started) {
                break;
            }
            if budget.max_iterations.is_some_and(|m| self.stats.edges_processed >= m) {
                break;
            }
            if self.queues_empty() && budget.max_batches.is_some_and(|m| self.batch >= m) {
                break;
            }
            self.iterate(sink);
        }
        self.finish()
    }

    fn tree_segments(&self) -> Vec<(StateVec, StateVec)> {
        self.vertices
            .entries()
            .filter_map(|(id, _)| self.nodes[id].parent.map(|p| (self.nodes[p].coords.clone(), self.nodes[id].coords.clone())))
            .collect()
    }
}

/// Runs the planner on `world` until `budget` is spent.
pub fn plan(world: &World, config: &PlannerConfig, budget: &Budget, sink: &mut EventSink<'_>) -> Result<PlannerResult> {
    let mut planner = BitStar::new(world.clone(), config.clone())?;
    Ok(planner.solve(budget, sink))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Aabb;

    fn sv(c: &[f64]) -> StateVec {
        StateVec::from_slice(c).unwrap()
    }

    fn empty_world() -> World {
        World::empty_cube(sv(&[0.0, 0.0]), sv(&[0.9, 0.9])).unwrap()
    }

    fn noop() -> impl FnMut(&crate::planner::CostEvent) {
        |_| {}
    }

    #[test]
    fn radius_reference_value() {
        let r = radius(100, 2, 1.1, 4.0).unwrap();
        let expected = 2.0 * 1.1 * 1.5f64.sqrt() * (4.0 / std::f64::consts::PI).sqrt() * (100f64.ln() / 100.0).sqrt();
        // 30-digit evaluation: 0.652448462201553228
        assert!((r - 0.652_448_462_201_553).abs() < 1e-12);
        assert!((r - expected).abs() < 1e-15);
        let doubled = radius(100, 2, 1.1, 8.0).unwrap();
        assert!((doubled / r - 2f64.sqrt()).abs() < 1e-12);
        assert!(radius(1_000_000_000, 2, 1.1, 4.0).unwrap() < 1e-3);
        assert!(radius(1, 2, 1.1, 4.0).is_err());
    }

    #[test]
    fn keys() {
        assert_eq!(edge_key(0.5, 0.2, 0.3).1, 0.5);
        assert!((edge_key(0.5, 0.2, 0.3).0 - 1.0).abs() < 1e-15);
        let inf = edge_key(f64::INFINITY, 0.2, 0.3);
        assert!(inf.0.is_infinite() && inf.1.is_infinite());
        let a = EdgeEntry { key: 1.0, source_cost: 0.4, source: 9, target: 1 };
        let b = EdgeEntry { key: 1.0, source_cost: 0.6, source: 2, target: 1 };
        let mut heap = BinaryHeap::from(vec![Reverse(b), Reverse(a)]);
        assert_eq!(heap.pop().unwrap().0.source_cost, 0.4);
    }

    #[test]
    fn initial_state() {
        let p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        assert_eq!(p.vertex_count(), 1);
        assert_eq!(p.sample_count(), 1);
        assert_eq!(p.status(p.goal_id()), StateStatus::Sample);
        assert!(p.radius().is_infinite());
        let c_min = 0.9 * 2f64.sqrt();
        assert!((p.vertex_key(p.start_id()) - c_min).abs() < 1e-15);
    }

    #[test]
    fn first_batch_setup() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::with_seed(4)).unwrap();
        p.new_batch();
        assert_eq!(p.sample_count(), 101);
        assert_eq!(p.stats().prunes, 0);
        let expected = radius(102, 2, 1.1, 4.0).unwrap();
        assert_eq!(p.radius(), expected);
        assert!(p.is_old(p.start_id()));
        assert_eq!(p.pending_vertices(), 1);
    }

    #[test]
    fn bad_config_rejected() {
        let w = empty_world();
        for cfg in [
            PlannerConfig { samples_per_batch: 0, ..Default::default() },
            PlannerConfig { rgg_eta: 0.9, ..Default::default() },
            PlannerConfig { prune_threshold_fraction: 1.0, ..Default::default() },
        ] {
            assert!(BitStar::new(w.clone(), cfg).is_err());
        }
    }

    #[test]
    fn goal_key_after_connection() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::with_seed(1)).unwrap();
        p.run_batch(&mut noop());
        let g = p.goal_id();
        assert_eq!(p.status(g), StateStatus::Vertex);
        assert_eq!(p.vertex_key(g), p.cost_to_come(g));
        for v in p.vertex_ids() {
            for x in p.sample_ids().into_iter().take(20) {
                assert!(p.vertex_key(v) <= p.edge_key(v, x).0 + 1e-12);
            }
        }
        p.check_tree().unwrap();
    }

    #[test]
    fn expand_requires_queued_vertex() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        assert!(p.expand_vertex(p.start_id()).is_err());
        assert!(p.expand_vertex(p.goal_id()).is_err());
    }

    #[test]
    fn extract_path_requires_solution() {
        let p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        assert!(p.extract_path().is_err());
    }

    #[test]
    fn sealed_goal_never_solves() {
        // the goal sits in a free pocket enclosed by closed walls
        let walls = vec![
            Aabb::new(vec![0.8, 0.8], vec![1.0, 0.85]).unwrap(),
            Aabb::new(vec![0.8, 0.95], vec![1.0, 1.0]).unwrap(),
            Aabb::new(vec![0.8, 0.8], vec![0.85, 1.0]).unwrap(),
            Aabb::new(vec![0.95, 0.8], vec![1.0, 1.0]).unwrap(),
        ];
        let w = World::new(Aabb::centered_cube(2, 1.0), walls, sv(&[0.0, 0.0]), sv(&[0.9, 0.9])).unwrap();
        let mut p = BitStar::new(w, PlannerConfig::with_seed(2)).unwrap();
        let mut events = 0;
        let res = p.solve(&Budget::batches(5), &mut |_| events += 1);
        assert_eq!(events, 0);
        assert!(res.path.is_none());
        assert_eq!(res.stats.batches, 5);
        p.check_tree().unwrap();
    }

    fn far_world() -> World {
        World::empty_cube(sv(&[-0.9, -0.9]), sv(&[0.9, 0.9])).unwrap()
    }

    fn attach(p: &mut BitStar, x: &[f64], parent: usize) -> usize {
        let id = p.add_node(sv(x), StateStatus::Vertex);
        let d = distance(&p.nodes[parent].coords, &p.nodes[id].coords);
        p.nodes[id].parent = Some(parent);
        p.nodes[id].edge_cost = d;
        p.nodes[id].cost = p.nodes[parent].cost + d;
        p.nodes[parent].children.push(id);
        id
    }

    #[test]
    fn single_sample_edge_insertion() {
        let mut p = BitStar::new(far_world(), PlannerConfig::default()).unwrap();
        p.new_batch_with(&[sv(&[-0.8, -0.9])]).unwrap();
        // radius(3) is below the start-goal distance, so only the sample is in reach
        assert!(p.radius() < 0.9 * 8f64.sqrt());
        p.expand_vertex(p.start_id()).unwrap();
        assert_eq!(p.edge_queue_len(), 1);
        let key = p.edge_key(p.start_id(), 2);
        assert_eq!(key.1, 0.0);
        assert!((key.0 - (0.1 + p.cost_to_go_estimate(2))).abs() < 1e-15);

        assert_eq!(p.process_best_edge(&mut noop()), EdgeOutcome::Expanded);
        assert_eq!((p.vertex_count(), p.sample_count()), (2, 1));
        assert!((p.cost_to_come(2) - 0.1).abs() < 1e-15);
        assert!(p.is_queued(2) && !p.is_old(2));
        assert!(p.new_batch_with(&[]).is_err());
    }

    #[test]
    fn no_samples_in_reach_queue_nothing() {
        let mut p = BitStar::new(far_world(), PlannerConfig::default()).unwrap();
        p.new_batch_with(&[]).unwrap();
        p.expand_vertex(p.start_id()).unwrap();
        assert_eq!(p.edge_queue_len(), 0);
        assert_eq!(p.process_best_edge(&mut noop()), EdgeOutcome::BatchEnd);
        assert!(p.queues_empty());
    }

    #[test]
    fn old_vertices_skip_rewiring_and_rewires_update_descendants() {
        let mut p = BitStar::new(far_world(), PlannerConfig::default()).unwrap();
        p.new_batch_with(&[sv(&[-0.8, -0.9]), sv(&[-0.8, -0.8]), sv(&[-0.7, -0.8])]).unwrap();
        p.run_batch(&mut noop());
        assert_eq!(p.batch(), 1);
        let (a, b, c) = (2, 3, 4);
        assert_eq!(p.vertex_count(), 4);
        assert!(p.best_cost().is_infinite());
        p.check_tree().unwrap();

        // hang c below b and make b's cost-to-come badly suboptimal
        let start = p.start_id();
        p.nodes[start].children.retain(|x| *x != c);
        p.nodes[c].parent = Some(b);
        p.nodes[c].edge_cost = 0.1;
        p.nodes[b].children.push(c);
        p.nodes[b].cost = 5.0;
        p.nodes[c].cost = 5.1;

        p.new_batch_with(&[]).unwrap();
        assert!(p.is_old(a));
        p.expand_vertex(a).unwrap();
        assert_eq!(p.edge_queue_len(), 0, "old vertices queue no rewiring edges");

        p.nodes[a].old = false;
        p.nodes[a].queued = true;
        p.pending_vertices += 1;
        p.expand_vertex(a).unwrap();
        assert_eq!(p.edge_queue_len(), 2, "a -> b and a -> c both improve");

        let vertices = p.vertex_count();
        let mut outcomes = Vec::new();
        while p.edge_queue_len() > 0 {
            outcomes.push(p.process_best_edge(&mut noop()));
        }
        assert!(outcomes.contains(&EdgeOutcome::Rewired));
        assert_eq!(p.vertex_count(), vertices);
        assert!((p.cost_to_come(b) - 0.2).abs() < 1e-12);
        assert!(p.cost_to_come(c) < 5.1);
        assert!((p.cost_to_come(c) - (p.cost_to_come(p.parent(c).unwrap()) + p.nodes[c].edge_cost)).abs() < 1e-15);
        p.check_tree().unwrap();
    }

    #[test]
    fn prune_returns_orphans_to_samples() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        let a = attach(&mut p, &[-0.5, 0.5], 0);
        let b = attach(&mut p, &[0.3, 0.3], a);
        let c = attach(&mut p, &[0.5, 0.5], b);
        let far = attach(&mut p, &[-0.9, -0.9], b);
        p.check_tree().unwrap();
        assert!(p.f_hat(a) > 1.4 && p.f_hat(b) < 1.4 && p.f_hat(c) < 1.4 && p.f_hat(far) > 1.4);
        p.prune(1.4);
        assert_eq!(p.status(a), StateStatus::Discarded);
        assert_eq!(p.status(far), StateStatus::Discarded);
        assert_eq!(p.status(b), StateStatus::Sample);
        assert_eq!(p.status(c), StateStatus::Sample);
        assert_eq!(p.vertex_ids(), vec![0]);
        assert_eq!(p.sample_ids(), vec![1, b, c]);
        p.check_tree().unwrap();
    }

    #[test]
    fn prune_boundaries() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        let s = p.add_node(sv(&[0.2, 0.6]), StateStatus::Sample);
        let c = p.f_hat(s);
        p.prune(c);
        assert_eq!(p.status(s), StateStatus::Discarded, "samples go at f_hat == c");

        let mut p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        let v = attach(&mut p, &[0.2, 0.6], 0);
        let c = p.f_hat(v);
        p.prune(c);
        assert_eq!(p.status(v), StateStatus::Vertex, "vertices stay at f_hat == c");
    }

    #[test]
    fn first_solution_triggers_prune() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::with_seed(1)).unwrap();
        p.run_batch(&mut noop());
        let c = p.best_cost();
        assert!(c.is_finite());
        p.new_batch();
        assert_eq!(p.stats().prunes, 1);
        for id in p.sample_ids() {
            assert!(p.f_hat(id) < c || id == p.goal_id());
        }
        for id in p.vertex_ids() {
            assert!(p.f_hat(id) <= c);
        }
    }

    #[test]
    fn zero_budget_is_empty() {
        let mut p = BitStar::new(empty_world(), PlannerConfig::default()).unwrap();
        let r = p.solve(&Budget::millis(0), &mut noop());
        assert!(r.path.is_none() && r.events.is_empty());
        assert_eq!(r.stats.batches, 0);
    }
}
