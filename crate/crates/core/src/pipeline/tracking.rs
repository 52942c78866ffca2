use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Sim3, Vec3};
use crate::loop_closure::{build_constraint, detect, estimate_scale_with, LoopDetectorConfig, ScaleConfig};
use crate::oracle::{FramePrediction, Oracle, SubmapDescriptor};
use crate::pose_graph::{optimize, EdgeKind, pose_updates, PoseGraph, PoseUpdate, Sim3Constraint, SolveReport, SolverConfig};
use crate::tracking::{
    build_submap, inter_submap_constraint, partition_ranges, ChainedTrajectory, InterSubmapConstraint, Submap,
    DEFAULT_CLIP_LENGTH,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingConfig {
    pub clip_length: usize,
    pub detector: LoopDetectorConfig,
    pub scale: ScaleConfig,
    pub solver: SolverConfig,
    pub information_sequential: f64,
    pub information_inter_submap: f64,
    pub information_loop: f64,
    pub disable_loop_closure: bool,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            clip_length: DEFAULT_CLIP_LENGTH,
            detector: LoopDetectorConfig::default(),
            scale: ScaleConfig::default(),
            solver: SolverConfig::default(),
            information_sequential: 1.0,
            information_inter_submap: 1.0,
            information_loop: 0.5,
            disable_loop_closure: false,
        }
    }
}

/// Everything the mapping stage needs to integrate one keyframe.
#[derive(Clone, Debug)]
pub struct KeyframePacket {
    pub frame_id: usize,
    pub submap_id: u32,
    /// Current world pose of the keyframe.
    pub pose: Sim3,
    pub prediction: FramePrediction,
}

/// Messages from the tracking stage to the mapping stage, in stream order.
#[derive(Clone, Debug)]
pub enum TrackingEvent {
    Keyframe(Box<KeyframePacket>),
    Correction(Vec<PoseUpdate>),
}

#[derive(Clone, Debug, Default)]
pub struct TrackingOutput {
    /// Chained trajectory without any loop correction.
    pub chained: ChainedTrajectory,
    /// Final node poses, keyed by frame id.
    pub optimized: BTreeMap<usize, Sim3>,
    pub inter_submap: Vec<InterSubmapConstraint>,
    pub loops: Vec<Sim3Constraint>,
    pub graph: PoseGraph,
    pub solves: Vec<SolveReport>,
    /// Loop candidates rejected by relocalization or scale checks.
    pub rejected_candidates: usize,
    pub num_submaps: usize,
}

impl TrackingOutput {
    /// `(timestamp, position)` of the optimized trajectory.
    pub fn positions(&self, oracle: &Oracle) -> Vec<(f64, Vec3)> {
        self.optimized
            .iter()
            .map(|(f, p)| (oracle.scene.timestamp(*f), p.translation))
            .collect()
    }

    /// `(timestamp, position)` of the chained trajectory before optimization.
    pub fn chained_positions(&self, oracle: &Oracle) -> Vec<(f64, Vec3)> {
        self.chained
            .frames
            .iter()
            .map(|f| (oracle.scene.timestamp(f.frame_id), f.pose.translation))
            .collect()
    }
}

/// Tracks the oracle's stream, detects and closes loops and optimizes the pose graph.
///
/// Keyframes and pose corrections are handed to `sink` in order.
pub fn run_tracking(
    oracle: &Oracle,
    cfg: &TrackingConfig,
    mut sink: impl FnMut(TrackingEvent) -> Result<()>,
) -> Result<TrackingOutput> {
    let ranges = partition_ranges(oracle.num_frames(), cfg.clip_length)?;
    let mut out = TrackingOutput {
        num_submaps: ranges.len(),
        ..Default::default()
    };
    let mut submaps: Vec<Submap> = Vec::with_capacity(ranges.len());
    let mut bag: Vec<SubmapDescriptor> = Vec::new();
    let mut graph = PoseGraph::new();
    let mut overlap_prediction: Option<FramePrediction> = None;

    for (m, frames) in ranges.iter().enumerate() {
        let mut submap = build_submap(oracle, m as u32, frames);
        let mut predictions = std::mem::take(&mut submap.predictions);

        let constraint = match (&overlap_prediction, submaps.last()) {
            (Some(prev_pred), Some(prev)) => {
                let c = inter_submap_constraint(prev, &submap, prev_pred, &predictions[0], &cfg.scale)?;
                out.inter_submap.push(c);
                Some(c)
            }
            _ => None,
        };
        let first_new = out.chained.frames.len();
        out.chained.push_submap(&submap, constraint.as_ref())?;

        // New nodes inherit the correction already applied to their predecessor.
        let correction = match first_new.checked_sub(1) {
            Some(k) => {
                let prev = &out.chained.frames[k];
                graph.nodes[&prev.frame_id].compose(&prev.pose.inverse())
            }
            None => Sim3::identity(),
        };
        for k in first_new..out.chained.frames.len() {
            let f = out.chained.frames[k];
            graph.add_node(f.frame_id, correction.compose(&f.pose));
            if k == 0 {
                graph.fix(f.frame_id)?;
            }
            if k > 0 {
                let prev = out.chained.frames[k - 1];
                let (information, kind) = if prev.submap_id == f.submap_id {
                    (cfg.information_sequential, EdgeKind::Sequential)
                } else {
                    (cfg.information_inter_submap, EdgeKind::InterSubmap)
                };
                graph.add_edge(Sim3Constraint {
                    from: prev.frame_id,
                    to: f.frame_id,
                    measurement: prev.pose.inverse().compose(&f.pose),
                    information,
                    kind,
                })?;
            }
        }

        let owned_start = usize::from(m > 0);
        let mut new_loops = 0;
        for (local, pred) in predictions.iter().enumerate().skip(owned_start) {
            if cfg.disable_loop_closure || local == 0 {
                continue;
            }
            let j = pred.frame_id;
            let feature = oracle.frame_feature(j);
            let candidates = detect(&bag, submap.submap_id, j, &feature, &cfg.detector, |i, q| {
                oracle.covisibility(i, q)
            });
            for cand in candidates {
                let desc = &bag[cand.historical_submap as usize];
                let hist = &submaps[cand.historical_submap as usize];
                let built = oracle.reinterpret_frame(j, desc).and_then(|reloc| {
                    let (pb, pa) = pred.correspondences(&reloc);
                    let s = estimate_scale_with(&pb, &pa, &cfg.scale)?;
                    let hist_pose = hist
                        .local_pose(cand.historical_frame)
                        .ok_or(Error::UnknownNode(cand.historical_frame))?;
                    build_constraint(j, cand.historical_frame, &reloc.pose_in_submap, hist_pose, s, cfg.information_loop)
                });
                match built {
                    Ok(c) => {
                        graph.add_edge(c)?;
                        out.loops.push(c);
                        new_loops += 1;
                    }
                    Err(Error::InsufficientOverlap { .. } | Error::RelocalizationInconsistent(_)) => {
                        out.rejected_candidates += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        for (local, pred) in predictions.drain(..).enumerate().skip(owned_start) {
            let is_overlap = local + 1 == frames.len();
            if is_overlap {
                overlap_prediction = Some(pred.clone());
            }
            sink(TrackingEvent::Keyframe(Box::new(KeyframePacket {
                frame_id: pred.frame_id,
                submap_id: submap.submap_id,
                pose: graph.nodes[&pred.frame_id],
                prediction: pred,
            })))?;
        }

        bag.push(submap.descriptor.clone());
        submaps.push(submap);

        let last = m + 1 == ranges.len();
        if new_loops > 0 || (last && !out.loops.is_empty() && out.solves.is_empty()) {
            let before = graph.nodes.clone();
            let report = optimize(&mut graph, &cfg.solver)?;
            out.solves.push(report);
            let updates = pose_updates(&before, &graph);
            sink(TrackingEvent::Correction(updates))?;
        }
    }

    out.optimized = graph.nodes.clone();
    out.graph = graph;
    Ok(out)
}
