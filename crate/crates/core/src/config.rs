//! Resolved run configuration and its flat key-value form.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evaluation::DepthAlignment;
use crate::io::{format_kv, parse_kv, read_text};
use crate::mapping::{DepthThreshold, MapperConfig, Preconditioner};
use crate::oracle::{NoiseModel, OracleConfig, SceneConfig};
use crate::pipeline::TrackingConfig;
use crate::raster::RenderConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub noise: NoiseModel,
    pub oracle: OracleConfig,
    pub tracking: TrackingConfig,
    pub mapping: MapperConfig,
    pub render: RenderConfig,
    pub depth_alignment: DepthAlignment,
    pub disable_mapping: bool,
    /// Capacity of the keyframe queue between the two stages.
    pub queue_capacity: usize,
    /// Measure wall-clock throughput; off keeps reports reproducible.
    pub timing: bool,
    /// Write trajectories with a scale column.
    pub sim3_trajectories: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            noise: NoiseModel::default(),
            oracle: OracleConfig::default(),
            tracking: TrackingConfig::default(),
            mapping: MapperConfig::default(),
            render: RenderConfig::default(),
            depth_alignment: DepthAlignment::default(),
            disable_mapping: false,
            queue_capacity: 16,
            timing: false,
            sim3_trajectories: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

fn optional(value: Option<f64>) -> String {
    value.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn depth_threshold_text(t: DepthThreshold) -> String {
    match t {
        DepthThreshold::Absolute(v) => format!("abs:{v}"),
        DepthThreshold::RelativeToMedian(v) => format!("median:{v}"),
    }
}

fn parse_depth_threshold(key: &str, value: &str) -> Result<DepthThreshold> {
    match value.split_once(':') {
        Some(("abs", v)) => Ok(DepthThreshold::Absolute(parse(key, v)?)),
        Some(("median", v)) => Ok(DepthThreshold::RelativeToMedian(parse(key, v)?)),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected abs:<v> or median:<fraction>"))),
    }
}

impl RunConfig {
    /// Every tunable value, in manifest order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.scene;
        let n = &self.noise;
        let o = &self.oracle;
        let t = &self.tracking;
        let m = &self.mapping;
        let r = &self.render;
        let i = &s.intrinsics;
        vec![
            ("seed", s.seed.to_string()),
            ("extent", s.extent.to_string()),
            ("room_height", s.room_height.to_string()),
            ("surfel_count", s.surfel_count.to_string()),
            ("num_frames", s.num_frames.to_string()),
            ("orbit_radius", s.orbit_radius.to_string()),
            ("camera_height", s.camera_height.to_string()),
            ("camera_pitch", s.camera_pitch.to_string()),
            ("frame_rate", s.frame_rate.to_string()),
            ("num_boxes", s.num_boxes.to_string()),
            ("fx", i.fx.to_string()),
            ("fy", i.fy.to_string()),
            ("cx", i.cx.to_string()),
            ("cy", i.cy.to_string()),
            ("width", i.width.to_string()),
            ("height", i.height.to_string()),
            ("noise_seed", n.rng_seed.to_string()),
            ("pose_rot_std", n.pose_rot_std.to_string()),
            ("pose_trans_std", n.pose_trans_std.to_string()),
            ("pose_rot_bias", n.pose_rot_bias.to_string()),
            ("pose_trans_bias", n.pose_trans_bias.to_string()),
            ("noise_warmup", n.warmup.to_string()),
            ("noise_forgetting", n.forgetting.to_string()),
            ("per_submap_scale_drift", n.per_submap_scale_drift.to_string()),
            ("point_noise_std", n.point_noise_std.to_string()),
            ("footprint_scale", o.footprint_scale.to_string()),
            ("prediction_opacity", o.opacity.to_string()),
            ("relocalization_covisibility", o.covisibility_threshold.to_string()),
            ("feature_yaw_bins", o.yaw_bins.to_string()),
            ("feature_position_cell", o.position_cell.to_string()),
            ("clip_length", t.clip_length.to_string()),
            ("loop_min_submap_gap", t.detector.min_submap_gap.to_string()),
            ("loop_feature_threshold", t.detector.feature_threshold.to_string()),
            ("loop_covisibility_threshold", t.detector.covisibility_threshold.to_string()),
            ("scale_outlier_rejection", t.scale.outlier_rejection.to_string()),
            ("information_sequential", t.information_sequential.to_string()),
            ("information_inter_submap", t.information_inter_submap.to_string()),
            ("information_loop", t.information_loop.to_string()),
            ("solver_max_iters", t.solver.max_iters.to_string()),
            ("solver_lambda0", t.solver.lm_lambda0.to_string()),
            ("solver_lambda_factor", t.solver.lambda_factor.to_string()),
            ("solver_chi2_rel_tol", t.solver.chi2_rel_tol.to_string()),
            ("solver_grad_tol", t.solver.grad_tol.to_string()),
            ("solver_dense_threshold", t.solver.dense_threshold.to_string()),
            ("solver_huber_delta", optional(t.solver.huber_delta)),
            ("solver_max_lambda", t.solver.max_lambda.to_string()),
            ("voxel_depth_threshold", depth_threshold_text(m.voxelization.depth_threshold)),
            ("accumulation_threshold", m.fusion.accumulation_threshold.to_string()),
            ("prune_rgb_error", m.fusion.prune_rgb_error.to_string()),
            ("prune_depth_error", m.fusion.prune_depth_error.to_string()),
            ("prune_contribution_floor", m.fusion.prune_contribution_floor.to_string()),
            ("refine_keyframes", m.refine.keyframes.to_string()),
            ("refine_iters", m.refine.iterations.to_string()),
            ("refine_initial_step", m.refine.initial_step.to_string()),
            ("refine_max_halvings", m.refine.max_halvings.to_string()),
            (
                "refine_preconditioner",
                match m.refine.preconditioner {
                    Preconditioner::None => "none",
                    Preconditioner::Jacobi => "jacobi",
                }
                .to_string(),
            ),
            ("loss_mse_weight", m.refine.weights.mse.to_string()),
            ("loss_depth_weight", m.refine.weights.depth.to_string()),
            ("render_near", r.near.to_string()),
            ("render_weight_clamp", r.weight_clamp.to_string()),
            ("render_min_transmittance", r.min_transmittance.to_string()),
            ("render_cull_sigma", r.cull_sigma.to_string()),
            ("render_max_condition", r.max_condition.to_string()),
            ("render_frustum_margin", r.frustum_margin.to_string()),
            ("depth_alignment", self.depth_alignment.as_str().to_string()),
            ("disable_loop_closure", t.disable_loop_closure.to_string()),
            ("disable_voxelization", m.disable_voxelization.to_string()),
            ("disable_prune", m.disable_prune.to_string()),
            ("disable_refine", m.disable_refine.to_string()),
            ("disable_mapping", self.disable_mapping.to_string()),
            ("queue_capacity", self.queue_capacity.to_string()),
            ("timing", self.timing.to_string()),
            ("sim3_trajectories", self.sim3_trajectories.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.scene;
        let n = &mut self.noise;
        let o = &mut self.oracle;
        let t = &mut self.tracking;
        let m = &mut self.mapping;
        let r = &mut self.render;
        let v = value;
        match key {
            "seed" => s.seed = parse(key, v)?,
            "extent" => s.extent = parse(key, v)?,
            "room_height" => s.room_height = parse(key, v)?,
            "surfel_count" => s.surfel_count = parse(key, v)?,
            "num_frames" => s.num_frames = parse(key, v)?,
            "orbit_radius" => s.orbit_radius = parse(key, v)?,
            "camera_height" => s.camera_height = parse(key, v)?,
            "camera_pitch" => s.camera_pitch = parse(key, v)?,
            "frame_rate" => s.frame_rate = parse(key, v)?,
            "num_boxes" => s.num_boxes = parse(key, v)?,
            "fx" => s.intrinsics.fx = parse(key, v)?,
            "fy" => s.intrinsics.fy = parse(key, v)?,
            "cx" => s.intrinsics.cx = parse(key, v)?,
            "cy" => s.intrinsics.cy = parse(key, v)?,
            "width" => s.intrinsics.width = parse(key, v)?,
            "height" => s.intrinsics.height = parse(key, v)?,
            "noise_seed" => n.rng_seed = parse(key, v)?,
            "pose_rot_std" => n.pose_rot_std = parse(key, v)?,
            "pose_trans_std" => n.pose_trans_std = parse(key, v)?,
            "pose_rot_bias" => n.pose_rot_bias = parse(key, v)?,
            "pose_trans_bias" => n.pose_trans_bias = parse(key, v)?,
            "noise_warmup" => n.warmup = parse(key, v)?,
            "noise_forgetting" => n.forgetting = parse(key, v)?,
            "per_submap_scale_drift" => n.per_submap_scale_drift = parse(key, v)?,
            "point_noise_std" => n.point_noise_std = parse(key, v)?,
            "footprint_scale" => o.footprint_scale = parse(key, v)?,
            "prediction_opacity" => o.opacity = parse(key, v)?,
            "relocalization_covisibility" => o.covisibility_threshold = parse(key, v)?,
            "feature_yaw_bins" => o.yaw_bins = parse(key, v)?,
            "feature_position_cell" => o.position_cell = parse(key, v)?,
            "clip_length" => t.clip_length = parse(key, v)?,
            "loop_min_submap_gap" => t.detector.min_submap_gap = parse(key, v)?,
            "loop_feature_threshold" => t.detector.feature_threshold = parse(key, v)?,
            "loop_covisibility_threshold" => t.detector.covisibility_threshold = parse(key, v)?,
            "scale_outlier_rejection" => t.scale.outlier_rejection = parse_bool(key, v)?,
            "information_sequential" => t.information_sequential = parse(key, v)?,
            "information_inter_submap" => t.information_inter_submap = parse(key, v)?,
            "information_loop" => t.information_loop = parse(key, v)?,
            "solver_max_iters" => t.solver.max_iters = parse(key, v)?,
            "solver_lambda0" => t.solver.lm_lambda0 = parse(key, v)?,
            "solver_lambda_factor" => t.solver.lambda_factor = parse(key, v)?,
            "solver_chi2_rel_tol" => t.solver.chi2_rel_tol = parse(key, v)?,
            "solver_grad_tol" => t.solver.grad_tol = parse(key, v)?,
            "solver_dense_threshold" => t.solver.dense_threshold = parse(key, v)?,
            "solver_huber_delta" => {
                t.solver.huber_delta = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "solver_max_lambda" => t.solver.max_lambda = parse(key, v)?,
            "voxel_depth_threshold" => m.voxelization.depth_threshold = parse_depth_threshold(key, v)?,
            "accumulation_threshold" => m.fusion.accumulation_threshold = parse(key, v)?,
            "prune_rgb_error" => m.fusion.prune_rgb_error = parse(key, v)?,
            "prune_depth_error" => m.fusion.prune_depth_error = parse(key, v)?,
            "prune_contribution_floor" => m.fusion.prune_contribution_floor = parse(key, v)?,
            "refine_keyframes" => m.refine.keyframes = parse(key, v)?,
            "refine_iters" => m.refine.iterations = parse(key, v)?,
            "refine_initial_step" => m.refine.initial_step = parse(key, v)?,
            "refine_max_halvings" => m.refine.max_halvings = parse(key, v)?,
            "refine_preconditioner" => {
                m.refine.preconditioner = match v {
                    "none" => Preconditioner::None,
                    "jacobi" => Preconditioner::Jacobi,
                    _ => return Err(Error::Config(format!("{key} = {v:?}: expected none or jacobi"))),
                }
            }
            "loss_mse_weight" => m.refine.weights.mse = parse(key, v)?,
            "loss_depth_weight" => m.refine.weights.depth = parse(key, v)?,
            "render_near" => r.near = parse(key, v)?,
            "render_weight_clamp" => r.weight_clamp = parse(key, v)?,
            "render_min_transmittance" => r.min_transmittance = parse(key, v)?,
            "render_cull_sigma" => r.cull_sigma = parse(key, v)?,
            "render_max_condition" => r.max_condition = parse(key, v)?,
            "render_frustum_margin" => r.frustum_margin = parse(key, v)?,
            "depth_alignment" => self.depth_alignment = v.parse()?,
            "disable_loop_closure" => t.disable_loop_closure = parse_bool(key, v)?,
            "disable_voxelization" => m.disable_voxelization = parse_bool(key, v)?,
            "disable_prune" => m.disable_prune = parse_bool(key, v)?,
            "disable_refine" => m.disable_refine = parse_bool(key, v)?,
            "disable_mapping" => self.disable_mapping = parse_bool(key, v)?,
            "queue_capacity" => self.queue_capacity = parse(key, v)?,
            "timing" => self.timing = parse_bool(key, v)?,
            "sim3_trajectories" => self.sim3_trajectories = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format_kv(&self.entries())
    }

    /// Applies `key = value` text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_kv(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.scene.intrinsics.validate()?;
        self.mapping.voxelization.validate()?;
        self.mapping.fusion.validate()?;
        self.mapping.refine.validate()?;
        if self.tracking.clip_length < 2 {
            return Err(Error::Config(format!(
                "clip_length must be at least 2, got {}",
                self.tracking.clip_length
            )));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be positive".into()));
        }
        for (name, v) in [
            ("information_sequential", self.tracking.information_sequential),
            ("information_inter_submap", self.tracking.information_inter_submap),
            ("information_loop", self.tracking.information_loop),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
