use std::collections::{BTreeMap, VecDeque};

use super::map::GlobalSurfelMap;
use super::ops::{
    adaptive_voxelize, fuse, prune, refine, FusionConfig, RefineConfig, RefineReport, SurfelGrid, VoxelizationConfig,
};
use crate::error::Result;
use crate::geometry::Sim3;
use crate::oracle::FramePrediction;
use crate::pose_graph::PoseUpdate;
use crate::raster::{CameraIntrinsics, GrayImage, Rasterizer, RenderConfig, RenderTargets, RgbImage};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MapperConfig {
    pub voxelization: VoxelizationConfig,
    pub fusion: FusionConfig,
    pub refine: RefineConfig,
    pub disable_voxelization: bool,
    pub disable_prune: bool,
    pub disable_refine: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapperStats {
    pub keyframes: usize,
    pub candidates: usize,
    pub voxelized: usize,
    pub inserted: usize,
    pub pruned: usize,
    pub corrections: usize,
    pub last_refine: Option<RefineReport>,
}

/// Backend stage: owns the map and integrates keyframes in arrival order.
#[derive(Clone, Debug)]
pub struct Mapper {
    pub map: GlobalSurfelMap,
    pub config: MapperConfig,
    pub intrinsics: CameraIntrinsics,
    pub rasterizer: Rasterizer,
    pub stats: MapperStats,
    recent: VecDeque<(u32, RenderTargets)>,
}

/// Depth observation in world units from a keyframe's predicted points.
pub fn predicted_depth(pred: &FramePrediction, intr: &CameraIntrinsics, scale: f64) -> GrayImage {
    let mut depth = GrayImage::new(intr.width, intr.height);
    for (p, a) in pred.points_cam.iter().zip(&pred.attrs) {
        if let Some(d) = depth.data.get_mut(a.pixel as usize) {
            *d = p.z * scale;
        }
    }
    depth
}

impl Mapper {
    pub fn new(config: MapperConfig, render: RenderConfig, intrinsics: CameraIntrinsics) -> Self {
        Self {
            map: GlobalSurfelMap::new(),
            config,
            intrinsics,
            rasterizer: Rasterizer::new(render),
            stats: MapperStats::default(),
            recent: VecDeque::new(),
        }
    }

    /// Prunes against the new observation, fuses the keyframe's surfels and
    /// refines the latest keyframes.
    pub fn integrate(
        &mut self,
        keyframe_id: u32,
        submap_id: u32,
        pose: Sim3,
        prediction: &FramePrediction,
        rgb: RgbImage,
    ) -> Result<()> {
        let cfg = self.config;
        let intr = self.intrinsics;
        self.map.register_keyframe(keyframe_id, pose);
        let targets = RenderTargets {
            rgb,
            depth: predicted_depth(prediction, &intr, pose.scale),
        };
        if !cfg.disable_prune {
            self.stats.pruned += prune(&mut self.map, &self.rasterizer, &intr, keyframe_id, &targets, &cfg.fusion)?;
        }
        let grid = SurfelGrid::from_prediction(prediction, intr.width, intr.height, keyframe_id, submap_id)?;
        let candidates = if cfg.disable_voxelization {
            grid.surfels().copied().collect()
        } else {
            adaptive_voxelize(&grid, &cfg.voxelization)?
        };
        self.stats.candidates += prediction.points_cam.len();
        self.stats.voxelized += candidates.len();
        let fused = fuse(&mut self.map, &self.rasterizer, &intr, &candidates, keyframe_id, &cfg.fusion)?;
        self.stats.inserted += fused.inserted;
        self.stats.keyframes += 1;

        self.recent.push_back((keyframe_id, targets));
        while self.recent.len() > cfg.refine.keyframes.max(1) {
            self.recent.pop_front();
        }
        if !cfg.disable_refine && cfg.refine.iterations > 0 {
            let views: Vec<(u32, &RenderTargets)> = self.recent.iter().map(|(k, t)| (*k, t)).collect();
            let report = refine(&mut self.map, &self.rasterizer, &intr, &views, &cfg.refine)?;
            self.stats.last_refine = Some(report);
        }
        Ok(())
    }

    /// Applies optimized poses to every registered keyframe and its surfels.
    pub fn apply_correction(&mut self, updates: &[PoseUpdate]) -> Result<()> {
        let deltas: BTreeMap<u32, Sim3> = updates
            .iter()
            .map(|u| (u.node as u32, u.delta))
            .filter(|(k, _)| self.map.keyframe_poses.contains_key(k))
            .collect();
        self.map.loop_correct(&deltas)?;
        self.stats.corrections += 1;
        Ok(())
    }
}
