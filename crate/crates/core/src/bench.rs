//! Random worlds, seeded trial sweeps and cost-versus-time aggregation.

use std::fmt;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, FmtStar, Rrt, RrtConnect, RrtStar};
use crate::bitstar::{BitStar, PlannerConfig};
use crate::error::{contract, Error, Result};
use crate::planner::{Budget, CostEvent, Planner};
use crate::sampling::{derive_seed, sample_uniform, RngStream};
use crate::space::{Aabb, StateVec, World};

/// Parameters of a random box world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomWorldSpec {
    pub dimension: usize,
    pub seed: u64,
    /// Side of the cube centred on the origin.
    pub width: f64,
    pub max_obstructed_fraction: f64,
    pub obstacle_width: (f64, f64),
    /// Added to the start on every axis to get the goal.
    pub goal_offset: f64,
    pub estimate_points: usize,
    /// In high dimensions the fraction cap is rarely reached; this bounds the count.
    pub max_obstacles: usize,
    /// Consecutive draws covering the start or goal before generation stops.
    pub max_redraws: usize,
}

impl RandomWorldSpec {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            seed,
            width: 2.0,
            max_obstructed_fraction: 1.0 / 3.0,
            obstacle_width: (0.1, 0.5),
            goal_offset: 0.9,
            estimate_points: 100_000,
            max_obstacles: 1000,
            max_redraws: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return contract("dimension must be positive");
        }
        let (lo, hi) = self.obstacle_width;
        if !(lo > 0.0 && lo <= hi && hi <= self.width) {
            return contract(format!("obstacle widths ({lo}, {hi}) do not fit a cube of width {}", self.width));
        }
        if !(self.goal_offset.abs() <= self.width / 2.0) {
            return contract("goal lies outside the cube");
        }
        if !(0.0..=1.0).contains(&self.max_obstructed_fraction) || self.estimate_points == 0 {
            return contract("obstructed fraction must be in [0, 1] with a positive point count");
        }
        Ok(())
    }
}

/// Adds axis-aligned boxes until the Monte Carlo obstructed fraction would
/// exceed the cap. Boxes touching the start or goal are redrawn.
pub fn gen_random_world(spec: &RandomWorldSpec) -> Result<World> {
    spec.validate()?;
    let n = spec.dimension;
    let half = spec.width / 2.0;
    let bounds = Aabb::centered_cube(n, half);
    let start = StateVec::zeros(n);
    let goal = StateVec::new(vec![spec.goal_offset; n])?;

    let mut probe_rng = RngStream::derive(spec.seed, 0);
    let probes: Vec<StateVec> = (0..spec.estimate_points).map(|_| sample_uniform(&bounds, &mut probe_rng)).collect();
    let mut covered = vec![false; probes.len()];
    let mut covered_count = 0usize;
    let cap = (spec.max_obstructed_fraction * probes.len() as f64).floor() as usize;

    let mut rng = RngStream::derive(spec.seed, 1);
    let (w_lo, w_hi) = spec.obstacle_width;
    let mut obstacles = Vec::new();
    let mut redraws = 0;
    while obstacles.len() < spec.max_obstacles {
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for _ in 0..n {
            let w = w_lo + (w_hi - w_lo) * rng.unit();
            let l = -half + (spec.width - w) * rng.unit();
            lo.push(l);
            hi.push(l + w);
        }
        let candidate = Aabb::new(lo, hi)?;
        if candidate.contains(&start) || candidate.contains(&goal) {
            redraws += 1;
            if redraws >= spec.max_redraws {
                break;
            }
            continue;
        }
        redraws = 0;
        let fresh: Vec<usize> =
            (0..probes.len()).filter(|&i| !covered[i] && candidate.contains(&probes[i])).collect();
        if covered_count + fresh.len() > cap {
            break;
        }
        for i in fresh {
            covered[i] = true;
        }
        covered_count = covered.iter().filter(|c| **c).count();
        obstacles.push(candidate);
    }
    World::new(bounds, obstacles, start, goal)
}

/// Monte Carlo estimate of the obstructed fraction of a world's bounds.
pub fn obstructed_fraction(world: &World, points: usize, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let hits = (0..points)
        .filter(|_| !world.state_free(&sample_uniform(world.bounds(), &mut rng)))
        .count();
    hits as f64 / points as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    BitStar,
    Rrt,
    RrtConnect,
    RrtStar,
    InformedRrtStar,
    FmtStar,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::BitStar,
        PlannerKind::Rrt,
        PlannerKind::RrtConnect,
        PlannerKind::RrtStar,
        PlannerKind::InformedRrtStar,
        PlannerKind::FmtStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::BitStar => "bitstar",
            PlannerKind::Rrt => "rrt",
            PlannerKind::RrtConnect => "rrtconnect",
            PlannerKind::RrtStar => "rrtstar",
            PlannerKind::InformedRrtStar => "informedrrtstar",
            PlannerKind::FmtStar => "fmtstar",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }

    /// A fresh planner for `world`; `seed` overrides the configured seeds.
    pub fn build(self, world: &World, settings: &PlannerSettings, seed: u64) -> Result<Box<dyn Planner + Send>> {
        let base = BaselineConfig { seed, ..settings.baseline.clone() };
        let world = world.clone();
        Ok(match self {
            PlannerKind::BitStar => Box::new(BitStar::new(world, PlannerConfig { seed, ..settings.bitstar.clone() })?),
            PlannerKind::Rrt => Box::new(Rrt::new(world, base)?),
            PlannerKind::RrtConnect => Box::new(RrtConnect::new(world, base)?),
            PlannerKind::RrtStar => Box::new(RrtStar::new(world, base)?),
            PlannerKind::InformedRrtStar => Box::new(RrtStar::new_informed(world, base)?),
            PlannerKind::FmtStar => Box::new(FmtStar::new(world, base)?),
        })
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown planner '{s}'; valid names: {}", Self::valid_names())))
    }
}

/// Configuration for every planner kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSettings {
    pub bitstar: PlannerConfig,
    pub baseline: BaselineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub planner: String,
    pub world_id: String,
    pub seed: u64,
    pub events: Vec<CostEvent>,
    pub success: bool,
    pub wall_time: Duration,
    /// Set when the trial could not run or panicked.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn final_cost(&self) -> f64 {
        self.events.last().map_or(f64::INFINITY, |e| e.cost)
    }
}

/// A world with the identifier used in output files.
#[derive(Debug, Clone)]
pub struct NamedWorld {
    pub id: String,
    pub world: World,
}

/// Runs one seeded trial, turning errors and panics into failed records.
pub fn run_trial(kind: PlannerKind, world: &NamedWorld, seed: u64, budget: &Budget, settings: &PlannerSettings) -> TrialRecord {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut planner = kind.build(&world.world, settings, seed)?;
        Ok::<_, Error>(planner.solve(budget, &mut |_| {}))
    }));
    let (events, error) = match outcome {
        Ok(Ok(result)) => (result.events, None),
        Ok(Err(e)) => (Vec::new(), Some(e.to_string())),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "planner panicked".to_string());
            (Vec::new(), Some(msg))
        }
    };
    TrialRecord {
        planner: kind.name().to_string(),
        world_id: world.id.clone(),
        seed,
        success: !events.is_empty(),
        events,
        wall_time: started.elapsed(),
        error,
    }
}

/// One record per (planner, world, seed), ordered planner-major then world
/// then seed, independent of `jobs`.
pub fn run_trials(
    planners: &[PlannerKind],
    worlds: &[NamedWorld],
    seeds: &[u64],
    budget: &Budget,
    settings: &PlannerSettings,
    jobs: usize,
) -> Result<Vec<TrialRecord>> {
    if planners.is_empty() || worlds.is_empty() || seeds.is_empty() {
        return contract("planners, worlds and seeds must be non-empty");
    }
    let triples: Vec<(PlannerKind, &NamedWorld, u64)> = planners
        .iter()
        .flat_map(|&p| worlds.iter().flat_map(move |w| seeds.iter().map(move |&s| (p, w, s))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        triples
            .par_iter()
            .map(|&(p, w, s)| run_trial(p, w, s, budget, settings))
            .collect()
    }))
}

/// `count` trial seeds derived from one master seed.
pub fn trial_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(master, i)).collect()
}

/// Best cost at `period, 2·period, …` up to `horizon`: the last event at or
/// before each instant, `+∞` before the first.
pub fn resample_series(events: &[CostEvent], period: Duration, horizon: Duration) -> Vec<f64> {
    let steps = grid_len(period, horizon);
    let mut out = Vec::with_capacity(steps);
    let mut next = 0;
    let mut current = f64::INFINITY;
    for k in 1..=steps {
        let t = period * k as u32;
        while next < events.len() && events[next].elapsed <= t {
            current = events[next].cost;
            next += 1;
        }
        out.push(current);
    }
    out
}

/// The events of a resampled series: one per change, at its grid instant.
pub fn series_events(series: &[f64], period: Duration) -> Vec<CostEvent> {
    let mut prev = f64::INFINITY;
    let mut out = Vec::new();
    for (k, &c) in series.iter().enumerate() {
        if c != prev {
            out.push(CostEvent { elapsed: period * (k as u32 + 1), cost: c });
            prev = c;
        }
    }
    out
}

fn grid_len(period: Duration, horizon: Duration) -> usize {
    if period.is_zero() {
        return 0;
    }
    (horizon.as_nanos() / period.as_nanos()) as usize
}

/// First instant at which the best cost is at most `target`.
pub fn time_to_reach(events: &[CostEvent], target: f64) -> Option<Duration> {
    events.iter().find(|e| e.cost <= target).map(|e| e.elapsed)
}

/// Median of an unsorted sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// 1-based inclusive order-statistic ranks bracketing the median of `n`
/// values with at least 95% coverage. Ranks are symmetric about `⌈n/2⌉`;
/// `(1, n)` when no symmetric interval reaches the coverage.
pub fn median_ci_ranks(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let pmf = binomial_half_pmf(n);
    let centre = n.div_ceil(2);
    for d in 0..centre {
        let (lo, hi) = (centre - d, centre + d);
        if hi > n {
            break;
        }
        // P(lo ≤ B ≤ hi − 1) for B ~ Bin(n, 1/2)
        let coverage: f64 = pmf[lo..hi].iter().sum();
        if coverage >= 0.95 {
            return (lo, hi);
        }
    }
    (1, n)
}

fn binomial_half_pmf(n: usize) -> Vec<f64> {
    let ln_half = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        out.push((ln_choose + ln_half).exp());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Fewer than half of the trials solved; no median.
    None,
    /// At least half but not all trials solved.
    Dashed,
    Solid,
}

impl Regime {
    fn from_fraction(success: f64) -> Self {
        if success >= 1.0 {
            Regime::Solid
        } else if success >= 0.5 {
            Regime::Dashed
        } else {
            Regime::None
        }
    }
}

/// Per-planner statistics on a regular time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub planner: String,
    pub trials: usize,
    pub period: Duration,
    pub time_ms: Vec<f64>,
    pub success_fraction: Vec<f64>,
    /// Median over solved trials where the regime is not `None`.
    pub median_cost: Vec<Option<f64>>,
    pub ci_lo: Vec<Option<f64>>,
    pub ci_hi: Vec<Option<f64>>,
    pub regime: Vec<Regime>,
}

/// Groups `records` by planner (sorted by name) and summarises each group.
pub fn aggregate(records: &[TrialRecord], period: Duration, horizon: Duration) -> Vec<SeriesStats> {
    let mut names: Vec<&str> = records.iter().map(|r| r.planner.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let steps = grid_len(period, horizon);
    names
        .into_iter()
        .map(|name| {
            let series: Vec<Vec<f64>> = records
                .iter()
                .filter(|r| r.planner == name)
                .map(|r| resample_series(&r.events, period, horizon))
                .collect();
            let total = series.len();
            let mut stats = SeriesStats {
                planner: name.to_string(),
                trials: total,
                period,
                time_ms: Vec::with_capacity(steps),
                success_fraction: Vec::with_capacity(steps),
                median_cost: Vec::with_capacity(steps),
                ci_lo: Vec::with_capacity(steps),
                ci_hi: Vec::with_capacity(steps),
                regime: Vec::with_capacity(steps),
            };
            for k in 0..steps {
                let mut solved: Vec<f64> = series.iter().map(|s| s[k]).filter(|c| c.is_finite()).collect();
                solved.sort_by(f64::total_cmp);
                let success = solved.len() as f64 / total as f64;
                let regime = Regime::from_fraction(success);
                stats.time_ms.push((period * (k as u32 + 1)).as_secs_f64() * 1e3);
                stats.success_fraction.push(success);
                stats.regime.push(regime);
                if regime == Regime::None {
                    stats.median_cost.push(None);
                    stats.ci_lo.push(None);
                    stats.ci_hi.push(None);
                } else {
                    let (lo, hi) = median_ci_ranks(solved.len());
                    stats.median_cost.push(median(&solved));
                    stats.ci_lo.push(Some(solved[lo - 1]));
                    stats.ci_hi.push(Some(solved[hi - 1]));
                }
            }
            stats
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub planner: String,
    pub world_id: String,
    pub seed: u64,
    pub elapsed_us: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub planner: String,
    pub world_id: String,
    pub seed: u64,
    pub success: bool,
    pub final_cost: Option<f64>,
    pub wall_time_us: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub planner: String,
    pub time_ms: f64,
    pub success_fraction: f64,
    pub median_cost: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub regime: Regime,
}

pub fn event_rows(records: &[TrialRecord]) -> Vec<EventRow> {
    records
        .iter()
        .flat_map(|r| {
            r.events.iter().map(|e| EventRow {
                planner: r.planner.clone(),
                world_id: r.world_id.clone(),
                seed: r.seed,
                elapsed_us: e.elapsed.as_micros() as u64,
                cost: e.cost,
            })
        })
        .collect()
}

pub fn trial_rows(records: &[TrialRecord]) -> Vec<TrialRow> {
    records
        .iter()
        .map(|r| TrialRow {
            planner: r.planner.clone(),
            world_id: r.world_id.clone(),
            seed: r.seed,
            success: r.success,
            final_cost: r.events.last().map(|e| e.cost),
            wall_time_us: r.wall_time.as_micros() as u64,
            error: r.error.clone(),
        })
        .collect()
}

pub fn aggregate_rows(stats: &[SeriesStats]) -> Vec<AggregateRow> {
    stats
        .iter()
        .flat_map(|s| {
            (0..s.time_ms.len()).map(move |k| AggregateRow {
                planner: s.planner.clone(),
                time_ms: s.time_ms[k],
                success_fraction: s.success_fraction[k],
                median_cost: s.median_cost[k],
                ci_lo: s.ci_lo[k],
                ci_hi: s.ci_hi[k],
                regime: s.regime[k],
            })
        })
        .collect()
}

/// Writes `rows` as CSV with a header, even when empty.
pub fn write_csv<R: Serialize, W: Write>(rows: &[R], header: &[&str], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>, In: Read>(input: In) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const EVENT_HEADER: [&str; 5] = ["planner", "world_id", "seed", "elapsed_us", "cost"];
pub const TRIAL_HEADER: [&str; 7] = ["planner", "world_id", "seed", "success", "final_cost", "wall_time_us", "error"];
pub const AGGREGATE_HEADER: [&str; 7] =
    ["planner", "time_ms", "success_fraction", "median_cost", "ci_lo", "ci_hi", "regime"];

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(ms: u64, cost: f64) -> CostEvent {
        CostEvent { elapsed: Duration::from_millis(ms), cost }
    }

    fn record(planner: &str, seed: u64, events: Vec<CostEvent>) -> TrialRecord {
        TrialRecord {
            planner: planner.into(),
            world_id: "w".into(),
            seed,
            success: !events.is_empty(),
            events,
            wall_time: Duration::ZERO,
            error: None,
        }
    }

    const MS: Duration = Duration::from_millis(1);

    #[test]
    fn resample_step_function() {
        let inf = f64::INFINITY;
        let s = resample_series(&[ev(3, 10.0), ev(7, 8.0)], MS, Duration::from_millis(9));
        assert_eq!(s, vec![inf, inf, 10.0, 10.0, 10.0, 10.0, 8.0, 8.0, 8.0]);
        assert!(resample_series(&[], MS, Duration::from_millis(5)).iter().all(|c| c.is_infinite()));
        assert_eq!(resample_series(&[ev(0, 2.5)], MS, Duration::from_millis(4)), vec![2.5; 4]);
    }

    #[test]
    fn series_events_round_trip() {
        let s = resample_series(&[ev(3, 10.0), ev(7, 8.0)], MS, Duration::from_millis(9));
        let e = series_events(&s, MS);
        assert_eq!(e, vec![ev(3, 10.0), ev(7, 8.0)]);
    }

    #[test]
    fn ci_ranks_for_fifty() {
        assert_eq!(median_ci_ranks(50), (18, 32));
        assert_eq!(median_ci_ranks(1), (1, 1));
        assert_eq!(median_ci_ranks(0), (0, 0));
    }

    #[test]
    fn identical_trials_collapse() {
        let recs: Vec<_> = (0..5).map(|s| record("a", s, vec![ev(1, 3.0)])).collect();
        let st = &aggregate(&recs, MS, Duration::from_millis(3))[0];
        assert_eq!(st.median_cost, vec![Some(3.0); 3]);
        assert_eq!(st.ci_lo, st.ci_hi);
        assert_eq!(st.regime, vec![Regime::Solid; 3]);
    }

    #[test]
    fn half_solved_is_dashed() {
        let recs = vec![record("a", 0, vec![ev(1, 3.0)]), record("a", 1, vec![])];
        let st = &aggregate(&recs, MS, Duration::from_millis(2))[0];
        assert_eq!(st.success_fraction, vec![0.5, 0.5]);
        assert_eq!(st.regime, vec![Regime::Dashed; 2]);
        assert_eq!(st.median_cost[0], Some(3.0));
    }

    #[test]
    fn below_half_has_no_median() {
        let recs = vec![record("a", 0, vec![ev(2, 3.0)]), record("a", 1, vec![]), record("a", 2, vec![])];
        let st = &aggregate(&recs, MS, Duration::from_millis(2))[0];
        assert_eq!(st.regime, vec![Regime::None; 2]);
        assert_eq!(st.median_cost, vec![None, None]);
    }

    #[test]
    fn time_to_reach_first_hit() {
        let e = [ev(3, 10.0), ev(7, 8.0)];
        assert_eq!(time_to_reach(&e, 9.0), Some(Duration::from_millis(7)));
        assert_eq!(time_to_reach(&e, 10.0), Some(Duration::from_millis(3)));
        assert_eq!(time_to_reach(&e, 7.0), None);
    }

    #[test]
    fn planner_names_parse() {
        for k in PlannerKind::ALL {
            assert_eq!(k.name().parse::<PlannerKind>().unwrap(), k);
        }
        let err = "astar".parse::<PlannerKind>().unwrap_err().to_string();
        assert!(err.contains("informedrrtstar"));
    }

    #[test]
    fn generated_worlds_respect_contract() {
        for seed in 0..10 {
            let w = gen_random_world(&RandomWorldSpec::new(2, seed)).unwrap();
            assert!(!w.obstacles().is_empty());
            assert!(obstructed_fraction(&w, 100_000, 99) <= 0.35);
            assert_eq!(w, gen_random_world(&RandomWorldSpec::new(2, seed)).unwrap());
        }
        assert!(gen_random_world(&RandomWorldSpec::new(0, 0)).is_err());
    }

    #[test]
    fn aggregate_csv_round_trip() {
        let recs = vec![record("a", 0, vec![ev(1, 3.0)]), record("b", 1, vec![])];
        let rows = aggregate_rows(&aggregate(&recs, MS, Duration::from_millis(2)));
        let mut buf = Vec::new();
        write_csv(&rows, &AGGREGATE_HEADER, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("planner,time_ms,success_fraction,median_cost,ci_lo,ci_hi,regime\n"));
        let back: Vec<AggregateRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}
