use std::collections::BTreeSet;

use nalgebra::{Quaternion, UnitQuaternion, Vector2};

use super::map::GlobalSurfelMap;
use crate::error::{Error, Result};
use crate::evaluation::{mean_psnr, psnr, Psnr};
use crate::geometry::{align, Sim3, Vec3};
use crate::oracle::FramePrediction;
use crate::raster::{
    grad_color_opacity, render_loss, CameraIntrinsics, GrayImage, LossWeights, Rasterizer, RenderTargets, Surfel,
    DEPTH_MASK_ACCUMULATION,
};

/// Camera-frame surfels laid out on the image grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfelGrid {
    pub width: usize,
    pub height: usize,
    /// Row-major; `None` where the frame predicted nothing.
    pub cells: Vec<Option<Surfel>>,
}

impl SurfelGrid {
    pub fn from_prediction(
        pred: &FramePrediction,
        width: usize,
        height: usize,
        keyframe_id: u32,
        submap_id: u32,
    ) -> Result<Self> {
        let mut cells = vec![None; width * height];
        for (s, a) in pred.surfels(keyframe_id, submap_id).into_iter().zip(&pred.attrs) {
            let cell = cells
                .get_mut(a.pixel as usize)
                .ok_or_else(|| Error::Config(format!("pixel {} outside {width}x{height} grid", a.pixel)))?;
            *cell = Some(s);
        }
        Ok(Self { width, height, cells })
    }

    pub fn surfels(&self) -> impl Iterator<Item = &Surfel> {
        self.cells.iter().flatten()
    }
}

/// Depth range above which a 2x2 block is left unmerged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthThreshold {
    Absolute(f64),
    /// Fraction of the median mean depth over complete blocks.
    RelativeToMedian(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelizationConfig {
    pub depth_threshold: DepthThreshold,
}

impl Default for VoxelizationConfig {
    fn default() -> Self {
        Self {
            depth_threshold: DepthThreshold::RelativeToMedian(0.05),
        }
    }
}

impl VoxelizationConfig {
    pub fn validate(&self) -> Result<()> {
        let v = match self.depth_threshold {
            DepthThreshold::Absolute(v) | DepthThreshold::RelativeToMedian(v) => v,
        };
        if v > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("voxel depth threshold must be positive, got {v}")))
        }
    }
}

fn blocks(grid: &SurfelGrid) -> impl Iterator<Item = [usize; 4]> + '_ {
    let w = grid.width;
    (0..grid.height / 2).flat_map(move |by| {
        (0..w / 2).map(move |bx| {
            let (x, y) = (2 * bx, 2 * by);
            [y * w + x, y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1]
        })
    })
}

fn merge(block: &[&Surfel; 4]) -> Surfel {
    let first = block[0];
    let mut mean = Vec3::zeros();
    let mut scale = Vector2::zeros();
    let mut color = Vec3::zeros();
    let mut opacity = 0.0;
    let mut confidence = 0.0;
    let mut q_sum = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for s in block {
        mean += s.mean;
        scale += s.scale;
        color += s.color;
        opacity += s.opacity;
        confidence += s.confidence;
        q_sum += align(&s.rotation, &first.rotation);
    }
    Surfel {
        mean: mean / 4.0,
        rotation: UnitQuaternion::from_quaternion(q_sum),
        scale: scale / 4.0,
        opacity: opacity / 4.0,
        color: color / 4.0,
        confidence: confidence / 4.0,
        keyframe_id: first.keyframe_id,
        submap_id: first.submap_id,
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Merges every complete 2x2 block whose camera-frame depth range is within
/// the threshold; all other surfels pass through unchanged.
///
/// A trailing odd row or column is never merged.
pub fn adaptive_voxelize(grid: &SurfelGrid, cfg: &VoxelizationConfig) -> Result<Vec<Surfel>> {
    cfg.validate()?;
    let complete: Vec<[&Surfel; 4]> = blocks(grid)
        .filter_map(|idx| {
            let cells = idx.map(|k| grid.cells[k].as_ref());
            match cells {
                [Some(a), Some(b), Some(c), Some(d)] => Some([a, b, c, d]),
                _ => None,
            }
        })
        .collect();
    let tau = match cfg.depth_threshold {
        DepthThreshold::Absolute(v) => v,
        DepthThreshold::RelativeToMedian(f) => {
            let depths = complete.iter().map(|b| b.iter().map(|s| s.mean.z).sum::<f64>() / 4.0).collect();
            f * median(depths).unwrap_or(0.0)
        }
    };
    let mut merged_cells = vec![false; grid.cells.len()];
    let mut out = Vec::with_capacity(grid.cells.len());
    for idx in blocks(grid) {
        let [Some(a), Some(b), Some(c), Some(d)] = idx.map(|k| grid.cells[k].as_ref()) else {
            continue;
        };
        let block = [a, b, c, d];
        let (lo, hi) = block
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.mean.z), hi.max(s.mean.z)));
        if hi - lo <= tau {
            out.push(merge(&block));
            for k in idx {
                merged_cells[k] = true;
            }
        }
    }
    for (k, cell) in grid.cells.iter().enumerate() {
        if let (Some(s), false) = (cell, merged_cells[k]) {
            out.push(*s);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    /// New surfels are only added where the map's accumulation is below this.
    pub accumulation_threshold: f64,
    /// Mean absolute RGB error that marks a pixel for pruning.
    pub prune_rgb_error: f64,
    /// Depth error, relative to the observed depth, that marks a pixel.
    pub prune_depth_error: f64,
    /// Minimum blending weight on a marked pixel for a surfel to be removed.
    pub prune_contribution_floor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            accumulation_threshold: 0.5,
            prune_rgb_error: 0.2,
            prune_depth_error: 0.1,
            prune_contribution_floor: 0.1,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.accumulation_threshold > 0.0 && self.accumulation_threshold < 1.0) {
            return Err(Error::Config(format!(
                "accumulation threshold must lie in (0, 1), got {}",
                self.accumulation_threshold
            )));
        }
        for (name, v) in [
            ("prune rgb error", self.prune_rgb_error),
            ("prune depth error", self.prune_depth_error),
            ("prune contribution floor", self.prune_contribution_floor),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FusionStats {
    pub candidates: usize,
    pub inserted: usize,
}

/// Maps camera-frame surfels into the world through `pose` and inserts those
/// landing on pixels the map does not yet cover.
pub fn fuse(
    map: &mut GlobalSurfelMap,
    rasterizer: &Rasterizer,
    intr: &CameraIntrinsics,
    candidates: &[Surfel],
    keyframe_id: u32,
    cfg: &FusionConfig,
) -> Result<FusionStats> {
    cfg.validate()?;
    let pose = *map.keyframe_pose(keyframe_id)?;
    let coverage = if map.is_empty() {
        None
    } else {
        Some(rasterizer.render(&map.surfels, &pose.to_se3(), intr).buffers.accumulation)
    };
    let mut stats = FusionStats {
        candidates: candidates.len(),
        inserted: 0,
    };
    for s in candidates {
        if let Some(acc) = &coverage {
            if covered(acc, intr, &s.mean, cfg.accumulation_threshold) {
                continue;
            }
        }
        map.insert(to_world(s, &pose, keyframe_id))?;
        stats.inserted += 1;
    }
    Ok(stats)
}

fn covered(acc: &GrayImage, intr: &CameraIntrinsics, p_cam: &Vec3, threshold: f64) -> bool {
    if p_cam.z <= 0.0 {
        return false;
    }
    let (u, v) = intr.project(p_cam);
    let (x, y) = (u.round(), v.round());
    if x < 0.0 || y < 0.0 || x >= intr.width as f64 || y >= intr.height as f64 {
        return false;
    }
    acc.get(x as usize, y as usize) >= threshold
}

/// `mu -> s R mu + t`, `r -> q r`, scales times `s`.
pub fn to_world(s: &Surfel, pose: &Sim3, keyframe_id: u32) -> Surfel {
    Surfel {
        mean: pose.act(&s.mean),
        rotation: pose.rotation * s.rotation,
        scale: s.scale * pose.scale,
        keyframe_id,
        ..*s
    }
}

/// Removes surfels that blend strongly into pixels with a large RGB or depth error.
///
/// Only pixels the map covers (accumulation above one half) can be marked;
/// depth is compared where the observation has depth.
pub fn prune(
    map: &mut GlobalSurfelMap,
    rasterizer: &Rasterizer,
    intr: &CameraIntrinsics,
    keyframe_id: u32,
    observed: &RenderTargets,
    cfg: &FusionConfig,
) -> Result<usize> {
    cfg.validate()?;
    if map.is_empty() {
        return Ok(0);
    }
    let pose = map.keyframe_pose(keyframe_id)?.to_se3();
    let (out, trace) = rasterizer.render_traced(&map.surfels, &pose, intr);
    crate::raster::check_shape(&out.buffers.color, &observed.rgb)?;
    crate::raster::check_shape(&out.buffers.color, &observed.depth)?;
    let depth = out.buffers.normalized_depth(DEPTH_MASK_ACCUMULATION);
    let mut doomed = BTreeSet::new();
    for (p, contribs) in trace.pixels.iter().enumerate() {
        if out.buffers.accumulation.data[p] <= DEPTH_MASK_ACCUMULATION {
            continue;
        }
        let (r, o) = (out.buffers.color.data[p], observed.rgb.data[p]);
        let rgb_err = (0..3).map(|k| (r[k] - o[k]).abs()).sum::<f64>() / 3.0;
        let d_obs = observed.depth.data[p];
        let depth_bad = d_obs > 0.0 && (depth.data[p] - d_obs).abs() > cfg.prune_depth_error * d_obs;
        if rgb_err <= cfg.prune_rgb_error && !depth_bad {
            continue;
        }
        for c in contribs {
            if c.weight * c.transmittance > cfg.prune_contribution_floor {
                doomed.insert(c.surfel as usize);
            }
        }
    }
    Ok(map.remove(&doomed))
}

/// How the refinement step direction is formed from the gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Preconditioner {
    /// Raw gradient.
    None,
    /// Gradient divided by the Gauss-Newton diagonal.
    #[default]
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    /// Number of latest keyframes refined together.
    pub keyframes: usize,
    pub iterations: usize,
    pub initial_step: f64,
    pub max_halvings: usize,
    pub weights: LossWeights,
    pub preconditioner: Preconditioner,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            keyframes: 4,
            iterations: 20,
            initial_step: 0.1,
            max_halvings: 20,
            weights: LossWeights::default(),
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keyframes == 0 {
            return Err(Error::Config("refinement needs at least one keyframe".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config(format!("refinement step must be positive, got {}", self.initial_step)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefineReport {
    /// Summed loss before the first iteration and after every accepted step.
    pub losses: Vec<f64>,
    pub psnr_before: Option<Psnr>,
    pub psnr_after: Option<Psnr>,
    pub accepted_steps: usize,
    pub refined_surfels: usize,
}

const CURVATURE_FLOOR: f64 = 1e-12;

/// One refinement view: keyframe id and its observation.
pub type RefineView<'a> = (u32, &'a RenderTargets);

struct ViewSubset<'a> {
    pose: crate::geometry::Se3Pose,
    targets: &'a RenderTargets,
    /// Indices into the working set, ascending.
    members: Vec<usize>,
}

/// Descends on color and opacity of the surfels bound to `views`' keyframes.
///
/// Every view renders the whole map, so unbound surfels shape the loss but stay fixed.
pub fn refine(
    map: &mut GlobalSurfelMap,
    rasterizer: &Rasterizer,
    intr: &CameraIntrinsics,
    views: &[RefineView<'_>],
    cfg: &RefineConfig,
) -> Result<RefineReport> {
    cfg.validate()?;
    let keyframes: Vec<u32> = views.iter().map(|(k, _)| *k).collect();
    let free = map.bound_to(&keyframes);
    let mut report = RefineReport {
        refined_surfels: free.len(),
        ..Default::default()
    };
    if views.is_empty() {
        return Ok(report);
    }

    // Geometry is fixed, so each view's visible set is too; work on their union.
    let mut visible = Vec::with_capacity(views.len());
    for (kf, targets) in views {
        let pose = map.keyframe_pose(*kf)?.to_se3();
        visible.push((pose, *targets, rasterizer.visible_indices(&map.surfels, &pose, intr)));
    }
    let mut active: Vec<usize> = visible.iter().flat_map(|v| v.2.iter().copied()).collect();
    active.sort_unstable();
    active.dedup();
    let slot = |i: usize| active.binary_search(&i).expect("member of the union");
    let subsets: Vec<ViewSubset> = visible
        .iter()
        .map(|(pose, targets, members)| ViewSubset {
            pose: *pose,
            targets,
            members: members.iter().map(|&i| slot(i)).collect(),
        })
        .collect();
    let free_local: Vec<usize> = free.iter().filter_map(|&i| active.binary_search(&i).ok()).collect();
    let mut local: Vec<Surfel> = active.iter().map(|&i| map.surfels[i]).collect();

    let gather = |surfels: &[Surfel], v: &ViewSubset| -> Vec<Surfel> { v.members.iter().map(|&i| surfels[i]).collect() };
    let evaluate = |surfels: &[Surfel]| -> Result<(f64, Vec<Psnr>)> {
        let mut total = 0.0;
        let mut quality = Vec::with_capacity(subsets.len());
        for v in &subsets {
            let out = rasterizer.render(&gather(surfels, v), &v.pose, intr);
            total += render_loss(&out.buffers, &v.targets.rgb, &v.targets.depth, cfg.weights)?;
            quality.push(psnr(&out.buffers.color, &v.targets.rgb)?);
        }
        Ok((total, quality))
    };

    let (mut loss, quality) = evaluate(&local)?;
    report.losses.push(loss);
    report.psnr_before = mean_psnr(&quality);
    report.psnr_after = report.psnr_before;

    for _ in 0..cfg.iterations {
        if free_local.is_empty() {
            break;
        }
        let mut grad = vec![(Vec3::zeros(), 0.0); local.len()];
        let mut curv = vec![(Vec3::zeros(), 0.0); local.len()];
        for v in &subsets {
            let g = grad_color_opacity(rasterizer, &gather(&local, v), &v.pose, intr, v.targets, cfg.weights)?;
            for (k, &i) in v.members.iter().enumerate() {
                grad[i].0 += g.gradients[k].color;
                grad[i].1 += g.gradients[k].opacity;
                curv[i].0 += g.curvature[k].color;
                curv[i].1 += g.curvature[k].opacity;
            }
        }
        let direction: Vec<(usize, Vec3, f64)> = free_local
            .iter()
            .map(|&i| {
                let (gc, go) = grad[i];
                match cfg.preconditioner {
                    Preconditioner::None => (i, gc, go),
                    Preconditioner::Jacobi => {
                        let (hc, ho) = curv[i];
                        (i, gc.component_div(&hc.add_scalar(CURVATURE_FLOOR)), go / (ho + CURVATURE_FLOOR))
                    }
                }
            })
            .filter(|(_, c, o)| c.norm_squared() + o * o > 0.0)
            .collect();
        if direction.is_empty() {
            break;
        }
        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut trial = local.clone();
            for &(i, dc, dop) in &direction {
                let s = &mut trial[i];
                s.color = (s.color - dc * step).map(|c| c.clamp(0.0, 1.0));
                s.opacity = (s.opacity - dop * step).clamp(0.0, 1.0);
            }
            let (trial_loss, quality) = evaluate(&trial)?;
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss, quality));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, new_loss, quality)) = accepted else {
            break;
        };
        local = trial;
        loss = new_loss;
        report.losses.push(loss);
        report.psnr_after = mean_psnr(&quality);
        report.accepted_steps += 1;
    }
    if report.accepted_steps > 0 {
        for &i in &free_local {
            map.surfels[active[i]] = local[i];
        }
    }
    Ok(report)
}
