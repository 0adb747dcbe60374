//! Types shared by every planner: budgets, solution events and results.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::space::{Path, StateVec};

/// One strict improvement of the best solution cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEvent {
    /// Time since the planner started, from a monotonic clock.
    pub elapsed: Duration,
    pub cost: f64,
}

/// When to stop. Unset limits are unbounded; a run with every limit unset
/// never stops on its own unless the planner terminates by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub time: Option<Duration>,
    /// Batches for the batch planner.
    pub max_batches: Option<u64>,
    /// Processed edges for the batch planner, samples for the RRT family.
    pub max_iterations: Option<u64>,
}

impl Budget {
    pub fn time(d: Duration) -> Self {
        Self { time: Some(d), ..Self::default() }
    }

    pub fn millis(ms: u64) -> Self {
        Self::time(Duration::from_millis(ms))
    }

    pub fn batches(n: u64) -> Self {
        Self { max_batches: Some(n), ..Self::default() }
    }

    pub fn iterations(n: u64) -> Self {
        Self { max_iterations: Some(n), ..Self::default() }
    }

    /// A budget that permits no work at all.
    pub fn is_zero(&self) -> bool {
        self.time == Some(Duration::ZERO) || self.max_batches == Some(0) || self.max_iterations == Some(0)
    }

    pub(crate) fn time_exhausted(&self, started: Instant) -> bool {
        self.time.is_some_and(|t| started.elapsed() >= t)
    }
}

/// Work counters reported with every result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlannerStats {
    pub batches: u64,
    pub iterations: u64,
    pub samples_generated: u64,
    /// Sampled states discarded because they were in collision.
    pub samples_in_collision: u64,
    /// Informed draws discarded because they fell outside the bounds.
    pub informed_rejections: u64,
    pub state_checks: u64,
    pub motion_checks: u64,
    pub edges_queued: u64,
    pub edges_processed: u64,
    pub vertex_expansions: u64,
    pub rewirings: u64,
    pub prunes: u64,
    pub pruned_states: u64,
    /// Instrumented runs only: edge insertions repeated within one batch.
    pub duplicate_edge_insertions: u64,
    /// Instrumented runs only: edges processed more than once within one batch.
    pub duplicate_edge_processing: u64,
    /// Instrumented runs only: processed edges whose key exceeded the best vertex key.
    pub dominance_violations: u64,
}

#[derive(Debug, Clone, Default)]
pub struct PlannerResult {
    pub path: Option<Path>,
    pub events: Vec<CostEvent>,
    pub stats: PlannerStats,
    pub elapsed: Duration,
}

impl PlannerResult {
    pub fn best_cost(&self) -> f64 {
        self.path.as_ref().map_or(f64::INFINITY, |p| p.cost)
    }
}

/// Receives each `CostEvent` as it happens.
pub type EventSink<'a> = dyn FnMut(&CostEvent) + 'a;

/// Common interface for the batch planner and the baselines.
pub trait Planner {
    fn name(&self) -> &'static str;

    fn solve(&mut self, budget: &Budget, sink: &mut EventSink<'_>) -> PlannerResult;

    /// Edges of the search structure after `solve`, for rendering.
    fn tree_segments(&self) -> Vec<(StateVec, StateVec)>;
}

/// Records strictly improving costs with timestamps relative to `started`.
#[derive(Debug)]
pub(crate) struct EventLog {
    started: Instant,
    best: f64,
    pub(crate) events: Vec<CostEvent>,
}

impl EventLog {
    pub(crate) fn new(started: Instant) -> Self {
        Self { started, best: f64::INFINITY, events: Vec::new() }
    }

    pub(crate) fn offer(&mut self, cost: f64, sink: &mut EventSink<'_>) -> bool {
        if cost < self.best {
            self.best = cost;
            let ev = CostEvent { elapsed: self.started.elapsed(), cost };
            sink(&ev);
            self.events.push(ev);
            true
        } else {
            false
        }
    }
}
