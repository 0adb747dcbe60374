//! Comparison planners on the same collision, sampling and neighbour code as
//! the batch planner: RRT, RRT-Connect, RRT*, Informed RRT* and FMT*.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bitstar::radius;
use crate::error::{contract, Result};
use crate::nn::PointIndex;
use crate::planner::{Budget, EventLog, EventSink, Planner, PlannerResult, PlannerStats};
use crate::sampling::{sample_uniform, ProlateHyperspheroid, RngStream};
use crate::space::{distance, Path, StateVec, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Probability of sampling the goal state (RRT, RRT*, Informed RRT*).
    pub goal_bias: f64,
    /// Longest extension; `None` picks 0.2 up to two dimensions and 1.25 above.
    pub max_edge_length: Option<f64>,
    pub rewire_eta: f64,
    pub fmt_sample_count: usize,
    pub collision_step: Option<f64>,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            goal_bias: 0.05,
            max_edge_length: None,
            rewire_eta: 1.1,
            fmt_sample_count: 1000,
            collision_step: None,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn edge_length(&self, n: usize) -> f64 {
        self.max_edge_length.unwrap_or(if n <= 2 { 0.2 } else { 1.25 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.goal_bias) {
            return contract(format!("goal_bias must be in [0, 1), got {}", self.goal_bias));
        }
        if let Some(l) = self.max_edge_length {
            if !(l > 0.0 && l.is_finite()) {
                return contract(format!("max_edge_length must be positive, got {l}"));
            }
        }
        if !(self.rewire_eta >= 1.0) {
            return contract(format!("rewire_eta must be >= 1, got {}", self.rewire_eta));
        }
        Ok(())
    }

    fn prepare(&self, world: World) -> Result<World> {
        self.validate()?;
        match self.collision_step {
            Some(step) => world.with_collision_step(step),
            None => Ok(world),
        }
    }
}

/// A rooted tree with cached costs and a neighbour index.
#[derive(Debug, Clone)]
struct Tree {
    states: Vec<StateVec>,
    parent: Vec<Option<usize>>,
    cost: Vec<f64>,
    edge: Vec<f64>,
    children: Vec<Vec<usize>>,
    index: PointIndex,
}

impl Tree {
    fn new(root: StateVec) -> Self {
        let mut index = PointIndex::new(root.dim());
        index.insert(&root, 0).expect("empty index");
        Self {
            states: vec![root],
            parent: vec![None],
            cost: vec![0.0],
            edge: vec![0.0],
            children: vec![Vec::new()],
            index,
        }
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    fn add(&mut self, x: StateVec, parent: usize) -> usize {
        let id = self.states.len();
        let d = distance(&self.states[parent], &x);
        self.index.insert(&x, id).expect("fresh id");
        self.states.push(x);
        self.parent.push(Some(parent));
        self.cost.push(self.cost[parent] + d);
        self.edge.push(d);
        self.children.push(Vec::new());
        self.children[parent].push(id);
        id
    }

    fn nearest(&self, x: &[f64]) -> usize {
        self.index.nearest(x).expect("tree is never empty")
    }

    fn reparent(&mut self, x: usize, parent: usize) {
        if let Some(old) = self.parent[x] {
            self.children[old].retain(|c| *c != x);
        }
        self.parent[x] = Some(parent);
        self.edge[x] = distance(&self.states[parent], &self.states[x]);
        self.children[parent].push(x);
        let mut stack = vec![x];
        while let Some(v) = stack.pop() {
            let p = self.parent[v].expect("reparented subtree");
            self.cost[v] = self.cost[p] + self.edge[v];
            stack.extend_from_slice(&self.children[v]);
        }
    }

    /// Root-to-`x` states.
    fn branch(&self, x: usize) -> Vec<StateVec> {
        let mut out = vec![self.states[x].clone()];
        let mut at = x;
        while let Some(p) = self.parent[at] {
            out.push(self.states[p].clone());
            at = p;
        }
        out.reverse();
        out
    }

    fn segments(&self) -> Vec<(StateVec, StateVec)> {
        (0..self.len())
            .filter_map(|i| self.parent[i].map(|p| (self.states[p].clone(), self.states[i].clone())))
            .collect()
    }
}

fn steer(from: &[f64], to: &StateVec, max_len: f64) -> StateVec {
    let d = distance(from, to);
    if d <= max_len {
        return to.clone();
    }
    let t = max_len / d;
    StateVec::from_vec_unchecked(from.iter().zip(to.iter()).map(|(a, b)| a + (b - a) * t).collect())
}

fn out_of_budget(budget: &Budget, started: Instant, iterations: u64) -> bool {
    budget.time_exhausted(started) || budget.max_iterations.is_some_and(|m| iterations >= m)
}

/// Goal-biased RRT; stops at the first connection to the goal.
pub struct Rrt {
    world: World,
    config: BaselineConfig,
    rng: RngStream,
    tree: Tree,
    goal_id: Option<usize>,
    started: Instant,
    log: EventLog,
    stats: PlannerStats,
}

impl Rrt {
    pub fn new(world: World, config: BaselineConfig) -> Result<Self> {
        let world = config.prepare(world)?;
        let started = Instant::now();
        Ok(Self {
            rng: RngStream::new(config.seed),
            tree: Tree::new(world.start().clone()),
            goal_id: None,
            started,
            log: EventLog::new(started),
            stats: PlannerStats::default(),
            world,
            config,
        })
    }
}

impl Planner for Rrt {
    fn name(&self) -> &'static str {
        "rrt"
    }

    fn solve(&mut self, budget: &Budget, sink: &mut EventSink<'_>) -> PlannerResult {
        if budget.is_zero() {
            return PlannerResult::default();
        }
        let max_len = self.config.edge_length(self.world.dimension());
        while self.goal_id.is_none() && !out_of_budget(budget, self.started, self.stats.iterations) {
            self.stats.iterations += 1;
            let target = if self.rng.chance(self.config.goal_bias) {
                self.world.goal().clone()
            } else {
                sample_uniform(self.world.bounds(), &mut self.rng)
            };
            self.stats.samples_generated += 1;
            let near = self.tree.nearest(&target);
            let new = steer(&self.tree.states[near], &target, max_len);
            if distance(&self.tree.states[near], &new) == 0.0 {
                continue;
            }
            self.stats.motion_checks += 1;
            if !self.world.motion_free(&self.tree.states[near], &new) {
                continue;
            }
            let reached = &new == self.world.goal();
            let id = self.tree.add(new, near);
            if reached {
                self.goal_id = Some(id);
                self.log.offer(self.tree.cost[id], sink);
            }
        }
        PlannerResult {
            path: self.goal_id.map(|g| Path { waypoints: self.tree.branch(g), cost: self.tree.cost[g] }),
            events: self.log.events.clone(),
            stats: self.stats.clone(),
            elapsed: self.started.elapsed(),
        }
    }

    fn tree_segments(&self) -> Vec<(StateVec, StateVec)> {
        self.tree.segments()
    }
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

/// Bidirectional RRT with greedy connection; no goal bias.
pub struct RrtConnect {
    world: World,
    config: BaselineConfig,
    rng: RngStream,
    trees: [Tree; 2],
    solution: Option<Path>,
    started: Instant,
    log: EventLog,
    stats: PlannerStats,
}

impl RrtConnect {
    pub fn new(world: World, config: BaselineConfig) -> Result<Self> {
        let world = config.prepare(world)?;
        let started = Instant::now();
        Ok(Self {
            rng: RngStream::new(config.seed),
            trees: [Tree::new(world.start().clone()), Tree::new(world.goal().clone())],
            solution: None,
            started,
            log: EventLog::new(started),
            stats: PlannerStats::default(),
            world,
            config,
        })
    }

    fn extend(&mut self, which: usize, target: &StateVec, max_len: f64) -> Extend {
        let tree = &mut self.trees[which];
        let near = tree.nearest(target);
        let new = steer(&tree.states[near], target, max_len);
        if distance(&tree.states[near], &new) == 0.0 {
            return Extend::Reached(near);
        }
        self.stats.motion_checks += 1;
        if !self.world.motion_free(&tree.states[near], &new) {
            return Extend::Trapped;
        }
        let reached = &new == target;
        let id = tree.add(new, near);
        if reached {
            Extend::Reached(id)
        } else {
            Extend::Advanced(id)
        }
    }
}

impl Planner for RrtConnect {
    fn name(&self) -> &'static str {
        "rrtconnect"
    }

    fn solve(&mut self, budget: &Budget, sink: &mut EventSink<'_>) -> PlannerResult {
        if budget.is_zero() {
            return PlannerResult::default();
        }
        let max_len = self.config.edge_length(self.world.dimension());
        let mut grow = 0;
        while self.solution.is_none() && !out_of_budget(budget, self.started, self.stats.iterations) {
            self.stats.iterations += 1;
            let target = sample_uniform(self.world.bounds(), &mut self.rng);
            self.stats.samples_generated += 1;
            let added = match self.extend(grow, &target, max_len) {
                Extend::Trapped => None,
                Extend::Advanced(id) | Extend::Reached(id) => Some(id),
            };
            if let Some(a) = added {
                let other = 1 - grow;
                let bridge = self.trees[grow].states[a].clone();
                loop {
                    match self.extend(other, &bridge, max_len) {
                        Extend::Advanced(_) => continue,
                        Extend::Trapped => break,
                        Extend::Reached(b) => {
                            let (from_start, from_goal) = if grow == 0 { (a, b) } else { (b, a) };
                            let mut waypoints = self.trees[0].branch(from_start);
                            let mut tail = self.trees[1].branch(from_goal);
                            tail.reverse();
                            // both branches end at the bridge state
                            waypoints.extend(tail.into_iter().skip(1));
                            let path = Path::from_waypoints(waypoints);
                            self.log.offer(path.cost, sink);
                            self.solution = Some(path);
                            break;
                        }
                    }
                }
            }
            grow = 1 - grow;
        }
        PlannerResult {
            path: self.solution.clone(),
            events: self.log.events.clone(),
            stats: self.stats.clone(),
            elapsed: self.started.elapsed(),
        }
    }

    fn tree_segments(&self) -> Vec<(StateVec, StateVec)> {
        let mut s = self.trees[0].segments();
        s.extend(self.trees[1].segments());
        s
    }
}

/// RRT* with r-disc rewiring; with `informed` set, samples come from the
/// informed set once a solution exists.
pub struct RrtStar {
    world: World,
    config: BaselineConfig,
    informed: bool,
    rng: RngStream,
    tree: Tree,
    goal_id: Option<usize>,
    phs: ProlateHyperspheroid,
    started: Instant,
    log: EventLog,
    stats: PlannerStats,
}

impl RrtStar {
    pub fn new(world: World, config: BaselineConfig) -> Result<Self> {
        Self::build(world, config, false)
    }

    pub fn new_informed(world: World, config: BaselineConfig) -> Result<Self> {
        Self::build(world, config, true)
    }

    fn build(world: World, config: BaselineConfig, informed: bool) -> Result<Self> {
        let world = config.prepare(world)?;
        let phs = ProlateHyperspheroid::new(world.start().clone(), world.goal().clone(), f64::INFINITY)?;
        let started = Instant::now();
        Ok(Self {
            rng: RngStream::new(config.seed),
            tree: Tree::new(world.start().clone()),
            goal_id: None,
            phs,
            started,
            log: EventLog::new(started),
            stats: PlannerStats::default(),
            informed,
            world,
            config,
        })
    }

    pub fn best_cost(&self) -> f64 {
        self.goal_id.map_or(f64::INFINITY, |g| self.tree.cost[g])
    }

    fn draw(&mut self) -> StateVec {
        if self.rng.chance(self.config.goal_bias) {
            return self.world.goal().clone();
        }
        if self.informed {
            let s = self.phs.sample(self.world.bounds(), &mut self.rng);
            self.stats.informed_rejections = self.phs.bounds_rejections;
            s
        } else {
            sample_uniform(self.world.bounds(), &mut self.rng)
        }
    }

    fn step(&mut self, max_len: f64, sink: &mut EventSink<'_>) {
        self.stats.iterations += 1;
        let target = self.draw();
        self.stats.samples_generated += 1;
        let nearest = self.tree.nearest(&target);
        let new = steer(&self.tree.states[nearest], &target, max_len);
        if distance(&self.tree.states[nearest], &new) == 0.0 {
            return;
        }
        self.stats.motion_checks += 1;
        if !self.world.motion_free(&self.tree.states[nearest], &new) {
            return;
        }

        let q = self.tree.len().max(2);
        let r = radius(q, self.world.dimension(), self.config.rewire_eta, self.world.measure())
            .expect("q >= 2")
            .min(max_len);
        let mut near = self.tree.index.near(&new, r).expect("matching dimension");
        if !near.contains(&nearest) {
            near.push(nearest);
        }
        let mut candidates: Vec<(f64, usize)> = near
            .iter()
            .map(|&u| (self.tree.cost[u] + distance(&self.tree.states[u], &new), u))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut parent = nearest;
        for &(_, u) in &candidates {
            if u == nearest {
                parent = u;
                break;
            }
            self.stats.motion_checks += 1;
            if self.world.motion_free(&self.tree.states[u], &new) {
                parent = u;
                break;
            }
        }

        let is_goal = &new == self.world.goal();
        let id = self.tree.add(new, parent);
        if is_goal {
            self.goal_id = Some(id);
        }

        let new_cost = self.tree.cost[id];
        for u in near {
            if u == parent {
                continue;
            }
            let d = distance(&self.tree.states[u], &self.tree.states[id]);
            if new_cost + d < self.tree.cost[u] {
                self.stats.motion_checks += 1;
                if self.world.motion_free(&self.tree.states[id], &self.tree.states[u]) {
                    self.tree.reparent(u, id);
                    self.stats.rewirings += 1;
                }
            }
        }

        let best = self.best_cost();
        if self.log.offer(best, sink) && self.informed {
            self.phs.set_cost(best).expect("solution costs are at least c_min");
        }
    }
}

impl Planner for RrtStar {
    fn name(&self) -> &'static str {
        if self.informed {
            "informedrrtstar"
        } else {
            "rrtstar"
        }
    }

    fn solve(&mut self, budget: &Budget, sink: &mut EventSink<'_>) -> PlannerResult {
        if budget.is_zero() {
            return PlannerResult::default();
        }
        let max_len = self.config.edge_length(self.world.dimension());
        while !out_of_budget(budget, self.started, self.stats.iterations) {
            self.step(max_len, sink);
        }
        PlannerResult {
            path: self.goal_id.map(|g| Path { waypoints: self.tree.branch(g), cost: self.tree.cost[g] }),
            events: self.log.events.clone(),
            stats: self.stats.clone(),
            elapsed: self.started.elapsed(),
        }
    }

    fn tree_segments(&self) -> Vec<(StateVec, StateVec)> {
        self.tree.segments()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open(f64, usize);

impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Unvisited,
    Open,
    Closed,
}

/// FMT*: one set of uniform free samples, marched outwards from the start
/// with lazy collision checking.
pub struct FmtStar {
    world: World,
    states: Vec<StateVec>,
    index: PointIndex,
    radius: f64,
    neighbours: Vec<Option<Vec<usize>>>,
    parent: Vec<Option<usize>>,
    cost: Vec<f64>,
    solution: Option<Path>,
    started: Instant,
    log: EventLog,
    stats: PlannerStats,
}

impl FmtStar {
    /// Draws the sample set; index 0 is the start and the last index the goal.
    pub fn new(world: World, config: BaselineConfig) -> Result<Self> {
        let world = config.prepare(world)?;
        let started = Instant::now();
        let mut stats = PlannerStats::default();
        let mut rng = RngStream::new(config.seed);
        let mut states = vec![world.start().clone()];
        while states.len() < config.fmt_sample_count + 1 {
            let x = sample_uniform(world.bounds(), &mut rng);
            stats.state_checks += 1;
            if world.state_free(&x) {
                states.push(x);
                stats.samples_generated += 1;
            } else {
                stats.samples_in_collision += 1;
            }
        }
        states.push(world.goal().clone());
        let r = radius(config.fmt_sample_count.max(2), world.dimension(), config.rewire_eta, world.measure())?;
        Self::with_states(world, states, r, started, stats)
    }

    /// Runs over caller-supplied states (`states[0]` start, last goal) and radius.
    pub fn from_states(world: World, states: Vec<StateVec>, r: f64) -> Result<Self> {
        if states.len() < 2 || &states[0] != world.start() || states.last() != Some(world.goal()) {
            return contract("states must run from the world's start to its goal");
        }
        Self::with_states(world, states, r, Instant::now(), PlannerStats::default())
    }

    fn with_states(world: World, states: Vec<StateVec>, r: f64, started: Instant, stats: PlannerStats) -> Result<Self> {
        let mut index = PointIndex::new(world.dimension());
        for (i, s) in states.iter().enumerate() {
            index.insert(s, i)?;
        }
        let n = states.len();
        Ok(Self {
            world,
            index,
            radius: r,
            neighbours: vec![None; n],
            parent: vec![None; n],
            cost: vec![f64::INFINITY; n],
            states,
            solution: None,
            started,
            log: EventLog::new(started),
            stats,
        })
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn neighbours(&mut self, x: usize) -> Vec<usize> {
        if self.neighbours[x].is_none() {
            let mut near = self.index.near(&self.states[x], self.radius).expect("matching dimension");
            near.retain(|&y| y != x);
            near.sort_unstable();
            self.neighbours[x] = Some(near);
        }
        self.neighbours[x].clone().expect("cached above")
    }
}

impl Planner for FmtStar {
    fn name(&self) -> &'static str {
        "fmtstar"
    }

    fn solve(&mut self, budget: &Budget, sink: &mut EventSink<'_>) -> PlannerResult {
        if budget.is_zero() {
            return PlannerResult::default();
        }
        let goal = self.states.len() - 1;
        let mut marks = vec![Mark::Unvisited; self.states.len()];
        let mut open = BinaryHeap::new();
        marks[0] = Mark::Open;
        self.cost[0] = 0.0;
        open.push(Reverse(Open(0.0, 0)));

        while self.solution.is_none() && !out_of_budget(budget, self.started, self.stats.iterations) {
            let Some(Reverse(Open(_, z))) = open.pop() else { break };
            if z == goal {
                let mut waypoints = vec![self.states[goal].clone()];
                let mut at = goal;
                while let Some(p) = self.parent[at] {
                    waypoints.push(self.states[p].clone());
                    at = p;
                }
                waypoints.reverse();
                let path = Path { waypoints, cost: self.cost[goal] };
                self.log.offer(path.cost, sink);
                self.solution = Some(path);
                break;
            }
            self.stats.iterations += 1;
            self.stats.vertex_expansions += 1;
            let mut opened = Vec::new();
            for x in self.neighbours(z) {
                if marks[x] != Mark::Unvisited {
                    continue;
                }
                let best = self
                    .neighbours(x)
                    .into_iter()
                    .filter(|&y| marks[y] == Mark::Open)
                    .map(|y| (self.cost[y] + distance(&self.states[y], &self.states[x]), y))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let Some((c, y)) = best else { continue };
                self.stats.motion_checks += 1;
                if self.world.motion_free(&self.states[y], &self.states[x]) {
                    self.cost[x] = c;
                    self.parent[x] = Some(y);
                    opened.push(x);
                }
            }
            for x in opened {
                marks[x] = Mark::Open;
                open.push(Reverse(Open(self.cost[x], x)));
            }
            marks[z] = Mark::Closed;
        }
        PlannerResult {
            path: self.solution.clone(),
            events: self.log.events.clone(),
            stats: self.stats.clone(),
            elapsed: self.started.elapsed(),
        }
    }

    fn tree_segments(&self) -> Vec<(StateVec, StateVec)> {
        (0..self.states.len())
            .filter_map(|i| self.parent[i].map(|p| (self.states[p].clone(), self.states[i].clone())))
            .collect()
    }
}
