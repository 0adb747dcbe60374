//! Exhaustive r-disc graph shortest paths. Quadratic in the state count; used
//! as a reference for the planners.

use petgraph::algo::{astar, dijkstra};
use petgraph::graph::{NodeIndex, UnGraph};

use crate::space::{distance, StateVec, World};

/// The r-disc graph over `states` with every collision-free pair within `r`
/// connected by its Euclidean length.
pub struct ExplicitRgg {
    graph: UnGraph<(), f64>,
}

impl ExplicitRgg {
    /// Motions are checked at the world's collision step.
    pub fn build(states: &[StateVec], r: f64, world: &World) -> Self {
        let mut graph = UnGraph::with_capacity(states.len(), 0);
        for _ in states {
            graph.add_node(());
        }
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                let d = distance(&states[i], &states[j]);
                if d > 0.0 && d <= r && world.motion_free(&states[i], &states[j]) {
                    graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), d);
                }
            }
        }
        Self { graph }
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.graph.neighbors(NodeIndex::new(i)).map(|x| x.index()).collect();
        n.sort_unstable();
        n
    }

    /// Shortest-path cost from `source` to every state, `+∞` where unreachable.
    pub fn costs_from(&self, source: usize) -> Vec<f64> {
        let reached = dijkstra(&self.graph, NodeIndex::new(source), None, |e| *e.weight());
        (0..self.graph.node_count())
            .map(|i| reached.get(&NodeIndex::new(i)).copied().unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Cost and state indices of a shortest path; `(∞, [])` if disconnected.
    pub fn shortest_path(&self, source: usize, target: usize) -> (f64, Vec<usize>) {
        match astar(
            &self.graph,
            NodeIndex::new(source),
            |n| n.index() == target,
            |e| *e.weight(),
            |_| 0.0,
        ) {
            Some((cost, nodes)) => (cost, nodes.into_iter().map(|n| n.index()).collect()),
            None => (f64::INFINITY, Vec::new()),
        }
    }
}

/// Shortest `source`→`target` path over the explicit r-disc graph of `states`.
pub fn rgg_shortest_path(states: &[StateVec], r: f64, world: &World, source: usize, target: usize) -> (f64, Vec<usize>) {
    if source == target {
        return (0.0, vec![source]);
    }
    ExplicitRgg::build(states, r, world).shortest_path(source, target)
}
