//! Sim(3) pose graph with sequential, inter-submap and loop edges, solved by
//! damped Gauss-Newton on the manifold.

mod graph;
mod solver;

use std::collections::BTreeMap;

pub use graph::{edge_jacobians, residual, EdgeKind, Matrix7, PoseGraph, Sim3Constraint, JACOBIAN_STEP};
pub use solver::{optimize, robust_chi2, SolveReport, SolverConfig};

use crate::geometry::Sim3;

/// Old and new pose of one node, with `delta = new * old^-1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseUpdate {
    pub node: usize,
    pub old: Sim3,
    pub new: Sim3,
    pub delta: Sim3,
}

/// Pairs every node of `after` with its pose in `before`.
pub fn pose_updates(before: &BTreeMap<usize, Sim3>, after: &PoseGraph) -> Vec<PoseUpdate> {
    after
        .nodes
        .iter()
        .filter_map(|(id, new)| {
            before.get(id).map(|old| PoseUpdate {
                node: *id,
                old: *old,
                new: *new,
                delta: new.compose(&old.inverse()),
            })
        })
        .collect()
}
