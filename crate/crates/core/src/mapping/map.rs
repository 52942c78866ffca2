use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::Sim3;
use crate::raster::Surfel;

/// World-frame surfels, each bound to the keyframe that created it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalSurfelMap {
    pub surfels: Vec<Surfel>,
    /// Keyframe id to the indices of its surfels.
    pub keyframe_index: BTreeMap<u32, Vec<usize>>,
    /// Current world pose of every registered keyframe.
    pub keyframe_poses: BTreeMap<u32, Sim3>,
}

impl GlobalSurfelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    pub fn register_keyframe(&mut self, keyframe_id: u32, pose: Sim3) {
        self.keyframe_poses.insert(keyframe_id, pose);
        self.keyframe_index.entry(keyframe_id).or_default();
    }

    pub fn keyframe_pose(&self, keyframe_id: u32) -> Result<&Sim3> {
        self.keyframe_poses
            .get(&keyframe_id)
            .ok_or(Error::UnknownNode(keyframe_id as usize))
    }

    /// Appends a world-frame surfel; its keyframe must be registered.
    pub fn insert(&mut self, surfel: Surfel) -> Result<usize> {
        let Some(bound) = self.keyframe_index.get_mut(&surfel.keyframe_id) else {
            return Err(Error::UnknownNode(surfel.keyframe_id as usize));
        };
        let id = self.surfels.len();
        bound.push(id);
        self.surfels.push(surfel);
        Ok(id)
    }

    /// Removes the given surfel indices and renumbers the rest.
    pub fn remove(&mut self, ids: &BTreeSet<usize>) -> usize {
        if ids.is_empty() {
            return 0;
        }
        let before = self.surfels.len();
        let mut k = 0;
        self.surfels.retain(|_| {
            let keep = !ids.contains(&k);
            k += 1;
            keep
        });
        self.rebuild_index();
        before - self.surfels.len()
    }

    pub fn rebuild_index(&mut self) {
        for bound in self.keyframe_index.values_mut() {
            bound.clear();
        }
        for (id, s) in self.surfels.iter().enumerate() {
            self.keyframe_index.entry(s.keyframe_id).or_default().push(id);
        }
    }

    /// Indices of surfels bound to any of `keyframes`, ascending.
    pub fn bound_to(&self, keyframes: &[u32]) -> Vec<usize> {
        let mut out: Vec<usize> = keyframes
            .iter()
            .filter_map(|k| self.keyframe_index.get(k))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Checks that the index covers every surfel exactly once under its own keyframe.
    pub fn check_binding(&self) -> Result<()> {
        let mut seen = vec![false; self.surfels.len()];
        for (kf, ids) in &self.keyframe_index {
            if !self.keyframe_poses.contains_key(kf) {
                return Err(Error::UnknownNode(*kf as usize));
            }
            for &id in ids {
                let Some(s) = self.surfels.get(id) else {
                    return Err(Error::Config(format!("keyframe {kf} binds missing surfel {id}")));
                };
                if s.keyframe_id != *kf || seen[id] {
                    return Err(Error::Config(format!("surfel {id} is bound inconsistently")));
                }
                seen[id] = true;
            }
        }
        match seen.iter().position(|s| !s) {
            Some(id) => Err(Error::Config(format!("surfel {id} is not bound to any keyframe"))),
            None => Ok(()),
        }
    }

    /// Rigidly moves every keyframe's surfels by `delta` and updates its pose.
    ///
    /// Every keyframe with bound surfels needs a delta.
    pub fn loop_correct(&mut self, deltas: &BTreeMap<u32, Sim3>) -> Result<()> {
        for (kf, ids) in &self.keyframe_index {
            if !ids.is_empty() && !deltas.contains_key(kf) {
                return Err(Error::MissingDelta(*kf));
            }
        }
        for s in &mut self.surfels {
            if let Some(d) = deltas.get(&s.keyframe_id) {
                s.mean = d.act(&s.mean);
                s.rotation = d.rotation * s.rotation;
                s.scale *= d.scale;
            }
        }
        for (kf, pose) in &mut self.keyframe_poses {
            if let Some(d) = deltas.get(kf) {
                *pose = d.compose(pose);
            }
        }
        Ok(())
    }
}
