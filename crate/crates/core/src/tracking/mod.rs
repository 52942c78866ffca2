//! Fixed-length submaps with a one-frame overlap, inter-submap Sim(3)
//! constraints and the chained world trajectory.

use crate::error::{Error, Result};
use crate::geometry::{Se3Pose, Sim3};
use crate::loop_closure::{estimate_scale_with, ScaleConfig};
use crate::oracle::{FramePrediction, Oracle, SubmapDescriptor};
use crate::pose_graph::{EdgeKind, Sim3Constraint};

/// Default number of frames per submap.
pub const DEFAULT_CLIP_LENGTH: usize = 8;

/// Frame ids of each submap: consecutive submaps share exactly one frame.
pub fn partition_ranges(num_frames: usize, clip_length: usize) -> Result<Vec<Vec<usize>>> {
    if clip_length < 2 {
        return Err(Error::Config(format!("clip length must be at least 2, got {clip_length}")));
    }
    if num_frames < 2 {
        return Err(Error::InsufficientData(format!(
            "stream has {num_frames} frames, need at least 2"
        )));
    }
    let stride = clip_length - 1;
    let mut out = Vec::new();
    let mut start = 0;
    while start < num_frames - 1 {
        let end = (start + stride).min(num_frames - 1);
        out.push((start..=end).collect());
        start = end;
    }
    Ok(out)
}

/// A contiguous clip of frames sharing one coordinate frame and scale.
#[derive(Clone, Debug)]
pub struct Submap {
    pub submap_id: u32,
    pub frame_ids: Vec<usize>,
    /// Frame to submap-origin poses; the first is the identity.
    pub local_poses: Vec<Se3Pose>,
    pub descriptor: SubmapDescriptor,
    /// Per-frame predictions; consumers may take them once used.
    pub predictions: Vec<FramePrediction>,
}

impl Submap {
    /// Shared with the next submap.
    pub fn overlap_frame_id(&self) -> usize {
        *self.frame_ids.last().expect("submaps are never empty")
    }

    pub fn local_pose(&self, frame_id: usize) -> Option<&Se3Pose> {
        let k = frame_id.checked_sub(self.frame_ids[0])?;
        self.local_poses.get(k)
    }

    /// Frames this submap owns; the first frame belongs to the previous submap.
    pub fn owned_frames(&self) -> &[usize] {
        if self.submap_id == 0 {
            &self.frame_ids
        } else {
            &self.frame_ids[1..]
        }
    }
}

/// Runs the oracle over one clip under a freshly initialized submap state.
pub fn build_submap(oracle: &Oracle, submap_id: u32, frame_ids: &[usize]) -> Submap {
    let state = oracle.submap_state(submap_id, frame_ids[0]);
    let predictions: Vec<FramePrediction> = frame_ids.iter().map(|&f| oracle.predict_frame(f, &state)).collect();
    Submap {
        submap_id,
        frame_ids: frame_ids.to_vec(),
        local_poses: predictions.iter().map(|p| p.pose_in_submap).collect(),
        descriptor: oracle.describe_submap(submap_id, frame_ids),
        predictions,
    }
}

/// Streams submaps over the oracle's frames.
pub struct SubmapStream<'a> {
    oracle: &'a Oracle,
    ranges: std::vec::IntoIter<Vec<usize>>,
    next_id: u32,
}

impl Iterator for SubmapStream<'_> {
    type Item = Submap;

    fn next(&mut self) -> Option<Submap> {
        let frames = self.ranges.next()?;
        let submap = build_submap(self.oracle, self.next_id, &frames);
        self.next_id += 1;
        Some(submap)
    }
}

pub fn partition(oracle: &Oracle, clip_length: usize) -> Result<SubmapStream<'_>> {
    let ranges = partition_ranges(oracle.num_frames(), clip_length)?;
    Ok(SubmapStream {
        oracle,
        ranges: ranges.into_iter(),
        next_id: 0,
    })
}

/// Alignment of submap `b`'s origin frame into submap `a`'s origin frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterSubmapConstraint {
    pub from_submap: u32,
    pub to_submap: u32,
    /// Estimated `scale_b / scale_a` from the shared frame's two point clouds.
    pub scale_ratio: f64,
    /// Maps points in `b`'s origin frame (b units) to `a`'s origin frame (a units).
    /// Its scale component is `1 / scale_ratio`.
    pub origin_pose: Sim3,
}

pub fn inter_submap_constraint(
    a: &Submap,
    b: &Submap,
    pred_a: &FramePrediction,
    pred_b: &FramePrediction,
    scale_cfg: &ScaleConfig,
) -> Result<InterSubmapConstraint> {
    let shared = a.overlap_frame_id();
    if b.frame_ids[0] != shared || pred_a.frame_id != shared || pred_b.frame_id != shared {
        return Err(Error::MissingConstraint(a.submap_id as usize, b.submap_id as usize));
    }
    let (points_b, points_a) = pred_b.correspondences(pred_a);
    let s = estimate_scale_with(&points_b, &points_a, scale_cfg)?;
    let origin_pose = pred_a
        .pose_in_submap
        .to_sim3(1.0)
        .compose(&Sim3::from_scale(1.0 / s))
        .compose(&pred_b.pose_in_submap.to_sim3(1.0).inverse());
    Ok(InterSubmapConstraint {
        from_submap: a.submap_id,
        to_submap: b.submap_id,
        scale_ratio: s,
        origin_pose,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainedFrame {
    pub frame_id: usize,
    /// Owning submap.
    pub submap_id: u32,
    /// Frame to world; the scale converts the owning submap's units to world units.
    pub pose: Sim3,
}

/// World poses of every frame, with frame 0 at the identity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainedTrajectory {
    pub frames: Vec<ChainedFrame>,
    /// Origin pose of each submap in the world.
    pub submap_origins: Vec<Sim3>,
}

impl ChainedTrajectory {
    /// Appends a submap. Every submap after the first needs its constraint.
    pub fn push_submap(&mut self, submap: &Submap, constraint: Option<&InterSubmapConstraint>) -> Result<()> {
        let expected = self.submap_origins.len() as u32;
        if submap.submap_id != expected {
            return Err(Error::Config(format!(
                "submap {} appended out of order, expected {expected}",
                submap.submap_id
            )));
        }
        let origin = match (expected, constraint) {
            (0, _) => Sim3::identity(),
            (_, Some(c)) if c.to_submap == expected && c.from_submap + 1 == expected => {
                self.submap_origins[c.from_submap as usize].compose(&c.origin_pose)
            }
            _ => return Err(Error::MissingConstraint(expected as usize - 1, expected as usize)),
        };
        self.submap_origins.push(origin);
        let skip = usize::from(expected > 0);
        for (&frame_id, local) in submap.frame_ids.iter().zip(&submap.local_poses).skip(skip) {
            self.frames.push(ChainedFrame {
                frame_id,
                submap_id: submap.submap_id,
                pose: origin.compose(&local.to_sim3(1.0)),
            });
        }
        Ok(())
    }

    pub fn pose(&self, frame_id: usize) -> Option<&Sim3> {
        self.frames
            .binary_search_by_key(&frame_id, |f| f.frame_id)
            .ok()
            .map(|k| &self.frames[k].pose)
    }

    pub fn set_pose(&mut self, frame_id: usize, pose: Sim3) -> Result<()> {
        let k = self
            .frames
            .binary_search_by_key(&frame_id, |f| f.frame_id)
            .map_err(|_| Error::UnknownNode(frame_id))?;
        self.frames[k].pose = pose;
        Ok(())
    }
}

/// Chains submaps through their inter-submap constraints.
pub fn chain(submaps: &[Submap], constraints: &[InterSubmapConstraint]) -> Result<ChainedTrajectory> {
    let mut traj = ChainedTrajectory::default();
    for submap in submaps {
        let c = constraints.iter().find(|c| c.to_submap == submap.submap_id);
        traj.push_submap(submap, c)?;
    }
    Ok(traj)
}

fn relative_edges(traj: &ChainedTrajectory, information: f64, crossing: bool) -> Vec<Sim3Constraint> {
    traj.frames
        .windows(2)
        .filter(|w| (w[0].submap_id != w[1].submap_id) == crossing)
        .map(|w| Sim3Constraint {
            from: w[0].frame_id,
            to: w[1].frame_id,
            measurement: w[0].pose.inverse().compose(&w[1].pose),
            information,
            kind: if crossing { EdgeKind::InterSubmap } else { EdgeKind::Sequential },
        })
        .collect()
}

/// `T_k^-1 T_{k+1}` for consecutive frames owned by the same submap.
pub fn sequential_edges(traj: &ChainedTrajectory, information: f64) -> Vec<Sim3Constraint> {
    relative_edges(traj, information, false)
}

/// Edges across submap boundaries, from the shared frame to the next submap's
/// first owned frame.
pub fn inter_submap_edges(traj: &ChainedTrajectory, information: f64) -> Vec<Sim3Constraint> {
    relative_edges(traj, information, true)
}
