//! Photometric/depth refinement loss and its analytic gradients with respect to
//! surfel color and opacity.

use super::buffers::{check_shape, GrayImage, RenderBuffers, RgbImage};
use super::camera::CameraIntrinsics;
use super::render::{Rasterizer, RenderTrace};
use super::surfel::Surfel;
use crate::error::Result;
use crate::geometry::{Se3Pose, Vec3};

/// Depth residuals only count where accumulation exceeds this.
pub const DEPTH_MASK_ACCUMULATION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mse: f64,
    pub depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mse: 1.0, depth: 0.1 }
    }
}

/// Observed image and depth for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderTargets {
    pub rgb: RgbImage,
    pub depth: GrayImage,
}

/// `mse * mean((I - I_hat)^2) + depth * mean_{A > 0.5}((D - D_hat)^2)`.
pub fn render_loss(
    buffers: &RenderBuffers,
    target_rgb: &RgbImage,
    target_depth: &GrayImage,
    weights: LossWeights,
) -> Result<f64> {
    check_shape(&buffers.color, target_rgb)?;
    check_shape(&buffers.color, target_depth)?;
    let n = target_rgb.data.len() as f64;
    let mut rgb = 0.0;
    for (a, b) in buffers.color.data.iter().zip(&target_rgb.data) {
        for k in 0..3 {
            let d = a[k] - b[k];
            rgb += d * d;
        }
    }
    rgb /= 3.0 * n;

    let mut depth = 0.0;
    let mut count = 0usize;
    for ((d, a), t) in buffers
        .depth
        .data
        .iter()
        .zip(&buffers.accumulation.data)
        .zip(&target_depth.data)
    {
        if *a > DEPTH_MASK_ACCUMULATION {
            depth += (d - t) * (d - t);
            count += 1;
        }
    }
    let depth = if count > 0 { depth / count as f64 } else { 0.0 };
    Ok(weights.mse * rgb + weights.depth * depth)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SurfelGradient {
    pub color: Vec3,
    pub opacity: f64,
}

/// Loss value and per-surfel gradients for one view.
#[derive(Clone, Debug)]
pub struct ViewGradients {
    pub loss: f64,
    pub gradients: Vec<SurfelGradient>,
    /// Gauss-Newton diagonal of the loss for the same parameters.
    pub curvature: Vec<SurfelGradient>,
}

/// Gradients of [`render_loss`] with respect to every surfel's color and opacity.
///
/// Geometry, the per-pixel depth order, the early-termination set and the depth
/// mask are held fixed.
pub fn grad_color_opacity(
    rasterizer: &Rasterizer,
    surfels: &[Surfel],
    pose: &Se3Pose,
    intr: &CameraIntrinsics,
    targets: &RenderTargets,
    weights: LossWeights,
) -> Result<ViewGradients> {
    let (out, trace) = rasterizer.render_traced(surfels, pose, intr);
    let loss = render_loss(&out.buffers, &targets.rgb, &targets.depth, weights)?;
    let (gradients, curvature) = backward(surfels, &out.buffers, &trace, targets, weights);
    Ok(ViewGradients {
        loss,
        gradients,
        curvature,
    })
}

pub(crate) fn backward(
    surfels: &[Surfel],
    buffers: &RenderBuffers,
    trace: &RenderTrace,
    targets: &RenderTargets,
    weights: LossWeights,
) -> (Vec<SurfelGradient>, Vec<SurfelGradient>) {
    let n_pix = buffers.color.data.len();
    let mask_count = buffers
        .accumulation
        .data
        .iter()
        .filter(|a| **a > DEPTH_MASK_ACCUMULATION)
        .count();
    let rgb_scale = 2.0 * weights.mse / (3.0 * n_pix as f64);
    let depth_scale = if mask_count > 0 {
        2.0 * weights.depth / mask_count as f64
    } else {
        0.0
    };

    let mut grads = vec![SurfelGradient::default(); surfels.len()];
    let mut curv = vec![SurfelGradient::default(); surfels.len()];
    for (p, contribs) in trace.pixels.iter().enumerate() {
        if contribs.is_empty() {
            continue;
        }
        let rendered = buffers.color.data[p];
        let target = targets.rgb.data[p];
        let d_color = Vec3::new(
            rgb_scale * (rendered[0] - target[0]),
            rgb_scale * (rendered[1] - target[1]),
            rgb_scale * (rendered[2] - target[2]),
        );
        let d_depth = if buffers.accumulation.data[p] > DEPTH_MASK_ACCUMULATION {
            depth_scale * (buffers.depth.data[p] - targets.depth.data[p])
        } else {
            0.0
        };

        // Suffix composites of everything behind contribution k.
        let mut behind_color = Vec3::zeros();
        let mut behind_depth = 0.0;
        for c in contribs.iter().rev() {
            let s = &surfels[c.surfel as usize];
            let z = c.depth;
            let g = &mut grads[c.surfel as usize];
            let h = &mut curv[c.surfel as usize];
            let wt = c.weight * c.transmittance;
            g.color += d_color * wt;
            h.color += Vec3::repeat(rgb_scale * wt * wt);
            if !c.clamped {
                let dw_color = (s.color - behind_color) * c.transmittance;
                let dw_depth = (z - behind_depth) * c.transmittance;
                g.opacity += (d_color.dot(&dw_color) + d_depth * dw_depth) * c.falloff;
                let depth_term = if buffers.accumulation.data[p] > DEPTH_MASK_ACCUMULATION {
                    depth_scale * dw_depth * dw_depth
                } else {
                    0.0
                };
                h.opacity += (rgb_scale * dw_color.norm_squared() + depth_term) * c.falloff * c.falloff;
            }
            behind_color = s.color * c.weight + behind_color * (1.0 - c.weight);
            behind_depth = z * c.weight + behind_depth * (1.0 - c.weight);
        }
    }
    (grads, curv)
}
