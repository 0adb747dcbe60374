//! Anytime, asymptotically optimal sampling-based motion planning.
//!
//! [`bitstar::BitStar`] searches an implicit random geometric graph in batches,
//! ordering edges by heuristic solution cost and focusing later batches on the
//! informed prolate hyperspheroid. The [`baselines`] module holds RRT, RRT-Connect,
//! RRT*, Informed RRT* and FMT* on the same geometry, sampling and neighbour
//! code, [`oracle`] holds an explicit-graph Dijkstra reference for tests, and
//! [`bench`] runs seeded trials and aggregates their cost-versus-time series.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod bitstar;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod sampling;
pub mod space;

pub use error::{Error, Result};
pub use planner::{Budget, CostEvent, Planner, PlannerResult, PlannerStats};
pub use space::{Aabb, Path, StateVec, World};
