use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand_distr::{Distribution, Normal};

use super::noise::NoiseModel;
use super::scene::SyntheticScene;
use crate::error::{Error, Result};
use crate::geometry::{canonicalize, Quat, Se3Pose, Vec3};
use crate::raster::{GrayImage, Rasterizer, RgbImage, Surfel};

/// Pixels count as observed above this accumulation.
pub const VALID_ACCUMULATION: f64 = 0.5;

const GRID_OFFSET: f64 = 0.25;

/// Per-point surfel attributes in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfelAttributes {
    pub rotation: Quat,
    pub scale: Vector2<f64>,
    pub opacity: f64,
    pub color: Vec3,
    pub confidence: f64,
    /// Row-major index of the source pixel.
    pub pixel: u32,
}

/// Simulated per-frame output of the feed-forward model.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    pub frame_id: usize,
    /// Camera to submap-origin pose, translation in the submap's scale.
    pub pose_in_submap: Se3Pose,
    pub points_cam: Vec<Vec3>,
    pub attrs: Vec<SurfelAttributes>,
}

impl FramePrediction {
    /// Point pairs `(self, other)` sharing a source pixel.
    pub fn correspondences(&self, other: &FramePrediction) -> (Vec<Vec3>, Vec<Vec3>) {
        let same_layout = self.attrs.len() == other.attrs.len()
            && self.attrs.iter().zip(&other.attrs).all(|(a, b)| a.pixel == b.pixel);
        if same_layout {
            return (self.points_cam.clone(), other.points_cam.clone());
        }
        let lookup: std::collections::HashMap<u32, usize> =
            other.attrs.iter().enumerate().map(|(k, a)| (a.pixel, k)).collect();
        self.attrs
            .iter()
            .enumerate()
            .filter_map(|(k, a)| lookup.get(&a.pixel).map(|&m| (self.points_cam[k], other.points_cam[m])))
            .unzip()
    }

    /// Camera-frame surfels with the given bindings.
    pub fn surfels(&self, keyframe_id: u32, submap_id: u32) -> Vec<Surfel> {
        self.points_cam
            .iter()
            .zip(&self.attrs)
            .map(|(p, a)| Surfel {
                mean: *p,
                rotation: a.rotation,
                scale: a.scale,
                opacity: a.opacity,
                color: a.color,
                confidence: a.confidence,
                keyframe_id,
                submap_id,
            })
            .collect()
    }
}

/// Oracle state of one submap context.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubmapState {
    pub submap_id: u32,
    pub origin_frame: usize,
    pub scale_state: f64,
}

/// Cached summary of a sealed submap, the stand-in for the model's hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmapDescriptor {
    pub submap_id: u32,
    pub origin_frame: usize,
    pub frame_ids: Vec<usize>,
    /// Ground-truth pose of the first frame; only the oracle reads it.
    pub anchor_pose_world: Se3Pose,
    pub scale_state: f64,
    /// Mean of the frame features.
    pub feature: Vec<f64>,
    pub frame_features: Vec<Vec<f64>>,
}

impl SubmapDescriptor {
    pub fn state(&self) -> SubmapState {
        SubmapState {
            submap_id: self.submap_id,
            origin_frame: self.origin_frame,
            scale_state: self.scale_state,
        }
    }
}

/// Ground-truth render of one frame.
#[derive(Clone, Debug)]
pub struct GroundTruthView {
    pub rgb: RgbImage,
    /// Depth normalized by accumulation, 0 where unobserved.
    pub depth: GrayImage,
    pub accumulation: GrayImage,
    /// Surfel with the largest blending weight at each pixel.
    pub dominant: Vec<Option<u32>>,
    /// Sorted ids of all dominant surfels.
    pub visible: Vec<u32>,
}

/// Settings of the oracle beyond the noise model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// Predicted surfel std as a multiple of the pixel footprint.
    pub footprint_scale: f64,
    pub opacity: f64,
    /// Minimum covisibility for a successful relocalization.
    pub covisibility_threshold: f64,
    pub yaw_bins: usize,
    pub position_cell: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            footprint_scale: 1.5,
            opacity: 0.95,
            covisibility_threshold: 0.3,
            yaw_bins: 12,
            position_cell: 1.0,
        }
    }
}

/// Deterministic simulator of the frontend model.
///
/// Predictions are pure functions of `(scene, noise, frame, submap state)`.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub scene: SyntheticScene,
    pub noise: NoiseModel,
    pub config: OracleConfig,
    views: Vec<GroundTruthView>,
}

impl Oracle {
    pub fn new(scene: SyntheticScene, noise: NoiseModel, config: OracleConfig) -> Result<Self> {
        scene.validate()?;
        noise.validate()?;
        let rasterizer = Rasterizer::default();
        let views = (0..scene.num_frames())
            .map(|f| ground_truth_view(&rasterizer, &scene, f))
            .collect();
        Ok(Self { scene, noise, config, views })
    }

    pub fn num_frames(&self) -> usize {
        self.scene.num_frames()
    }

    pub fn view(&self, frame: usize) -> &GroundTruthView {
        &self.views[frame]
    }

    pub fn submap_state(&self, submap_id: u32, origin_frame: usize) -> SubmapState {
        SubmapState {
            submap_id,
            origin_frame,
            scale_state: self.noise.scale_state(submap_id),
        }
    }

    /// Ground-truth pose of `frame` relative to `origin`, translation scaled.
    fn relative_pose(&self, origin: usize, frame: usize, scale: f64) -> Se3Pose {
        if origin == frame {
            return Se3Pose::identity();
        }
        let rel = self.scene.pose(origin).inverse().compose(self.scene.pose(frame));
        Se3Pose::new(rel.rotation, rel.translation * scale)
    }

    pub fn predict_frame(&self, frame_id: usize, state: &SubmapState) -> FramePrediction {
        assert!(frame_id < self.num_frames(), "frame {frame_id} outside trajectory");
        let k = frame_id.saturating_sub(state.origin_frame);
        let noise = self.noise.accumulated(state.submap_id, k, state.scale_state);
        let pose = noise.compose(&self.relative_pose(state.origin_frame, frame_id, state.scale_state));
        let key = [2, state.submap_id as u64, frame_id as u64];
        let (points_cam, attrs) = self.interpret(frame_id, state.scale_state, &key);
        FramePrediction {
            frame_id,
            pose_in_submap: pose,
            points_cam,
            attrs,
        }
    }

    /// Re-predicts `frame_id` conditioned on a historical submap.
    pub fn reinterpret_frame(&self, frame_id: usize, descriptor: &SubmapDescriptor) -> Result<FramePrediction> {
        let covisibility = descriptor
            .frame_ids
            .iter()
            .map(|&f| self.covisibility(f, frame_id))
            .fold(0.0, f64::max);
        if covisibility < self.config.covisibility_threshold {
            return Err(Error::InsufficientOverlap {
                covisibility,
                threshold: self.config.covisibility_threshold,
            });
        }
        if descriptor.frame_ids.contains(&frame_id) {
            // Same context: identical to the streaming prediction.
            return Ok(self.predict_frame(frame_id, &descriptor.state()));
        }
        let scale = descriptor.scale_state;
        let key = [descriptor.submap_id as u64, frame_id as u64];
        let noise = self.noise.single_step(&[3, key[0], key[1]], scale);
        let pose = noise.compose(&self.relative_pose(descriptor.origin_frame, frame_id, scale));
        let (points_cam, attrs) = self.interpret(frame_id, scale, &[4, key[0], key[1]]);
        Ok(FramePrediction {
            frame_id,
            pose_in_submap: pose,
            points_cam,
            attrs,
        })
    }

    fn interpret(&self, frame_id: usize, scale: f64, key: &[u64]) -> (Vec<Vec3>, Vec<SurfelAttributes>) {
        let view = &self.views[frame_id];
        let intr = &self.scene.intrinsics;
        let cam_from_world = self.scene.pose(frame_id).rotation.inverse();
        let mut rng = self.noise.point_rng(key);
        let normal = Normal::new(0.0, self.noise.point_noise_std).expect("validated std");
        let mut points = Vec::new();
        let mut attrs = Vec::new();
        for y in 0..intr.height {
            for x in 0..intr.width {
                let idx = y * intr.width + x;
                let a = view.accumulation.data[idx];
                let Some(dominant) = view.dominant[idx] else { continue };
                if a <= VALID_ACCUMULATION {
                    continue;
                }
                let depth = view.depth.data[idx];
                let mut p = intr.unproject(x as f64, y as f64, depth) * scale;
                if self.noise.point_noise_std > 0.0 {
                    p += Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
                }
                p.z = p.z.max(1e-3);
                let gt = &self.scene.surfels[dominant as usize];
                let c = view.rgb.data[idx];
                let footprint = self.config.footprint_scale * scale * depth;
                points.push(p);
                attrs.push(SurfelAttributes {
                    rotation: canonicalize(&(cam_from_world * gt.rotation)),
                    scale: Vector2::new(footprint / intr.fx, footprint / intr.fy),
                    opacity: self.config.opacity,
                    color: Vec3::new(c[0] / a, c[1] / a, c[2] / a).map(|v| v.clamp(0.0, 1.0)),
                    confidence: a.min(1.0),
                    pixel: idx as u32,
                });
            }
        }
        (points, attrs)
    }

    /// Fraction of the surfels visible in `query` that are also visible in `reference`.
    pub fn covisibility(&self, reference: usize, query: usize) -> f64 {
        let (a, b) = (&self.views[reference].visible, &self.views[query].visible);
        if b.is_empty() {
            return 0.0;
        }
        let (mut i, mut j, mut shared) = (0, 0, 0usize);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        shared as f64 / b.len() as f64
    }

    /// Quantized viewing direction plus position cell.
    ///
    /// The position grid is offset by a quarter cell so the default orbit
    /// start does not sit on a cell boundary.
    pub fn frame_feature(&self, frame: usize) -> Vec<f64> {
        let pose = self.scene.pose(frame);
        let forward = pose.rotation * Vec3::z();
        let bins = self.config.yaw_bins.max(1) as f64;
        let yaw = forward.y.atan2(forward.x).rem_euclid(TAU);
        let bin = (yaw / TAU * bins).floor().min(bins - 1.0);
        let center = (bin + 0.5) * TAU / bins;
        let cell = self.config.position_cell;
        vec![
            center.cos(),
            center.sin(),
            (pose.translation.x / cell + GRID_OFFSET).floor(),
            (pose.translation.y / cell + GRID_OFFSET).floor(),
        ]
    }

    pub fn describe_submap(&self, submap_id: u32, frame_ids: &[usize]) -> SubmapDescriptor {
        let origin = frame_ids[0];
        let frame_features: Vec<Vec<f64>> = frame_ids.iter().map(|&f| self.frame_feature(f)).collect();
        let dim = frame_features[0].len();
        let mut feature = vec![0.0; dim];
        for f in &frame_features {
            for (m, v) in feature.iter_mut().zip(f) {
                *m += v / frame_features.len() as f64;
            }
        }
        SubmapDescriptor {
            submap_id,
            origin_frame: origin,
            frame_ids: frame_ids.to_vec(),
            anchor_pose_world: *self.scene.pose(origin),
            scale_state: self.noise.scale_state(submap_id),
            feature,
            frame_features,
        }
    }
}

/// Renders the ground-truth scene at one trajectory pose.
pub fn ground_truth_view(rasterizer: &Rasterizer, scene: &SyntheticScene, frame: usize) -> GroundTruthView {
    let (out, trace) = rasterizer.render_traced(&scene.surfels, scene.pose(frame), &scene.intrinsics);
    let dominant: Vec<Option<u32>> = trace
        .pixels
        .iter()
        .map(|contribs| {
            contribs
                .iter()
                .max_by(|a, b| (a.weight * a.transmittance).total_cmp(&(b.weight * b.transmittance)))
                .map(|c| c.surfel)
        })
        .collect();
    let mut visible: Vec<u32> = dominant.iter().flatten().copied().collect();
    visible.sort_unstable();
    visible.dedup();
    GroundTruthView {
        depth: out.buffers.normalized_depth(VALID_ACCUMULATION),
        rgb: out.buffers.color,
        accumulation: out.buffers.accumulation,
        dominant,
        visible,
    }
}
