//! Search-tree invariants of the batch planner, checked against the explicit graph.

use bitstar::bitstar::{BitStar, EdgeOutcome, PlannerConfig, StateStatus};
use bitstar::oracle::ExplicitRgg;
use bitstar::sampling::{sample_uniform, RngStream};
use bitstar::space::euclidean_distance;
use bitstar::{Aabb, CostEvent, Planner, StateVec, World};

const TOL: f64 = 1e-9;

fn sv(c: &[f64]) -> StateVec {
    StateVec::from_slice(c).unwrap()
}

fn shipped(i: usize) -> World {
    let path = format!("{}/tests/data/worlds/world_2d_2015_{i}.json", env!("CARGO_MANIFEST_DIR"));
    World::load(path).unwrap()
}

fn sealed() -> World {
    let walls = vec![
        Aabb::new(vec![0.8, 0.8], vec![1.0, 0.85]).unwrap(),
        Aabb::new(vec![0.8, 0.95], vec![1.0, 1.0]).unwrap(),
        Aabb::new(vec![0.8, 0.8], vec![0.85, 1.0]).unwrap(),
        Aabb::new(vec![0.95, 0.8], vec![1.0, 1.0]).unwrap(),
    ];
    World::new(Aabb::centered_cube(2, 1.0), walls, sv(&[0.0, 0.0]), sv(&[0.9, 0.9])).unwrap()
}

fn walled() -> World {
    let wall = Aabb::new(vec![-0.1, -1.0], vec![0.1, 0.6]).unwrap();
    World::new(Aabb::centered_cube(2, 1.0), vec![wall], sv(&[-0.8, -0.5]), sv(&[0.8, -0.5])).unwrap()
}

fn free_samples(world: &World, count: usize, seed: u64) -> Vec<StateVec> {
    let mut rng = RngStream::new(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = sample_uniform(world.bounds(), &mut rng);
        if world.is_state_free(&x).unwrap() {
            out.push(x);
        }
    }
    out
}

/// After the first batch, every state that could still improve the solution
/// is in the tree at its shortest-path cost over the batch's r-disc graph.
fn assert_first_batch_optimal(p: &BitStar) -> usize {
    let states = p.graph_states();
    let coords: Vec<StateVec> = states.iter().map(|(_, x)| x.clone()).collect();
    let root = states.iter().position(|(id, _)| *id == p.start_id()).unwrap();
    let g_star = ExplicitRgg::build(&coords, p.radius(), p.world()).costs_from(root);
    let c_best = p.best_cost();
    let mut promising = 0;
    for (k, (id, _)) in states.iter().enumerate() {
        if g_star[k] + p.cost_to_go_estimate(*id) < c_best - TOL {
            promising += 1;
            assert_eq!(p.status(*id), StateStatus::Vertex, "state {id} is promising but unconnected");
            assert!(
                (p.cost_to_come(*id) - g_star[k]).abs() <= TOL,
                "state {id}: tree cost {} vs graph cost {}",
                p.cost_to_come(*id),
                g_star[k]
            );
        }
    }
    if c_best.is_finite() {
        let goal = states.iter().position(|(id, _)| *id == p.goal_id()).unwrap();
        assert!((c_best - g_star[goal]).abs() <= TOL, "solution {c_best} vs graph optimum {}", g_star[goal]);
    }
    promising
}

fn first_batch(world: World, samples: usize, seed: u64) -> BitStar {
    let config = PlannerConfig { samples_per_batch: samples, ..PlannerConfig::with_seed(seed) };
    let mut p = BitStar::new(world, config).unwrap();
    p.run_batch(&mut |_| {});
    p.check_tree().unwrap();
    p
}

#[test]
fn first_batch_matches_graph_search_on_shipped_worlds() {
    for i in 0..5 {
        for seed in 0..4 {
            let p = first_batch(shipped(i), 300, seed);
            assert!(assert_first_batch_optimal(&p) > 0);
        }
    }
}

#[test]
fn first_batch_matches_graph_search_with_supplied_samples() {
    for (w, seed) in [(walled(), 7), (shipped(2), 8), (World::empty_cube(sv(&[0.0, 0.0]), sv(&[0.9, 0.9])).unwrap(), 9)] {
        let samples = free_samples(&w, 250, seed);
        let mut p = BitStar::new(w, PlannerConfig::with_seed(seed)).unwrap();
        p.new_batch_with(&samples).unwrap();
        p.run_batch(&mut |_| {});
        p.check_tree().unwrap();
        assert_first_batch_optimal(&p);
    }
}

#[test]
fn sealed_goal_batch_connects_everything_reachable() {
    let p = first_batch(sealed(), 400, 3);
    assert!(p.best_cost().is_infinite());
    // with no solution every reachable state is promising
    let states = p.graph_states();
    let coords: Vec<StateVec> = states.iter().map(|(_, x)| x.clone()).collect();
    let root = states.iter().position(|(id, _)| *id == p.start_id()).unwrap();
    let g_star = ExplicitRgg::build(&coords, p.radius(), p.world()).costs_from(root);
    let reachable = g_star.iter().filter(|g| g.is_finite()).count();
    assert_eq!(assert_first_batch_optimal(&p), reachable);
    assert_eq!(p.vertex_count(), reachable);
}

#[test]
fn supplied_batches_are_validated() {
    let w = walled();
    let mut p = BitStar::new(w, PlannerConfig::with_seed(1)).unwrap();
    assert!(p.new_batch_with(&[sv(&[0.0, 0.0])]).is_err(), "inside the wall");
    assert!(p.new_batch_with(&[sv(&[0.0, 0.0, 0.0])]).is_err(), "wrong dimension");
    p.new_batch_with(&[sv(&[0.0, 0.8])]).unwrap();
    assert!(p.new_batch_with(&[sv(&[0.5, 0.8])]).is_err(), "queues are not empty");
}

fn step_checked(world: World, seed: u64, edges: u64) {
    let config = PlannerConfig { samples_per_batch: 60, ..PlannerConfig::with_seed(seed) };
    let mut p = BitStar::new(world, config).unwrap();
    let mut events: Vec<CostEvent> = Vec::new();
    let mut batch_ends = 0;
    while p.stats().edges_processed < edges {
        if p.iterate(&mut |e| events.push(*e)) == EdgeOutcome::BatchEnd {
            batch_ends += 1;
        }
        p.check_tree().unwrap();
        for v in p.vertex_ids() {
            assert!(p.cost_to_come_estimate(v) <= p.cost_to_come(v) + TOL, "vertex {v} estimate exceeds its cost");
        }
        if p.best_cost().is_finite() {
            let path = p.extract_path().unwrap();
            assert!(path.is_valid_in(p.world()));
            assert!((path.cost - p.best_cost()).abs() <= TOL);
        }
    }
    assert!(batch_ends > 1, "several batches should have run");
    assert!(events.windows(2).all(|w| w[1].cost < w[0].cost && w[1].elapsed >= w[0].elapsed));
    if let Some(last) = events.last() {
        assert_eq!(last.cost, p.best_cost());
    }
}

#[test]
fn tree_stays_consistent_through_every_iteration() {
    step_checked(walled(), 11, 4000);
    step_checked(shipped(3), 12, 4000);
    step_checked(sealed(), 13, 3000);
}

#[test]
fn solutions_respect_the_straight_line_bound() {
    for i in 0..5 {
        let w = shipped(i);
        let c_min = euclidean_distance(w.start(), w.goal()).unwrap();
        let mut p = BitStar::new(w, PlannerConfig::with_seed(i as u64)).unwrap();
        let res = p.solve(&bitstar::Budget::batches(3), &mut |_| {});
        assert!(res.best_cost() >= c_min - TOL);
        for e in &res.events {
            assert!(e.cost >= c_min - TOL);
        }
    }
}

#[test]
fn identical_seeds_give_identical_trees() {
    let run = || {
        let mut p = BitStar::new(shipped(1), PlannerConfig::with_seed(42)).unwrap();
        let res = p.solve(&bitstar::Budget::batches(4), &mut |_| {});
        (res.best_cost(), res.stats.clone(), p.tree_segments())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.edges_processed, b.1.edges_processed);
    assert_eq!(a.2, b.2);
}
