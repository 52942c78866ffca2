//! Front-to-back alpha blending of projected surfels.
//!
//! Per pixel `p`, with surfels sorted by ascending camera depth,
//!
//! ```text
//! w_i(p) = opacity_i * exp(-0.5 (p - mu_i)^T Sigma_i^-1 (p - mu_i))
//! (I, D, A) = sum_i (c_i, z_i, 1) w_i prod_{j<i} (1 - w_j)
//! ```

use std::cmp::Ordering;

use nalgebra::{Matrix2, Matrix2x3, Matrix3x2, Vector2};

use super::buffers::RenderBuffers;
use super::camera::CameraIntrinsics;
use super::surfel::Surfel;
use crate::geometry::Se3Pose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    /// Surfels with camera depth at or below this are culled.
    pub near: f64,
    /// Upper bound applied to every blending weight. 1.0 disables clamping.
    pub weight_clamp: f64,
    /// Blending stops at a pixel once transmittance drops below this.
    pub min_transmittance: f64,
    /// Footprint half-extent in standard deviations.
    pub cull_sigma: f64,
    /// Screen covariances with a larger condition number are skipped.
    pub max_condition: f64,
    /// Means projecting further outside the image than this fraction of its
    /// size are culled, since the affine footprint is meaningless there.
    pub frustum_margin: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            near: 1e-2,
            weight_clamp: 1.0,
            min_transmittance: 1e-4,
            cull_sigma: 3.0,
            max_condition: 1e8,
            frustum_margin: 0.5,
        }
    }
}

/// Screen-space footprint of a surfel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub center: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    pub depth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    Visible(Footprint),
    /// Behind the camera or closer than the near plane.
    Culled,
}

/// Projects a surfel through a camera whose pose maps camera to world.
///
/// The covariance is the affine (Jacobian) projection of the surfel's
/// tangent-plane covariance.
pub fn project_surfel(surfel: &Surfel, pose: &Se3Pose, intr: &CameraIntrinsics) -> Projection {
    project_with_near(surfel, pose, intr, RenderConfig::default().near)
}

fn project_with_near(surfel: &Surfel, pose: &Se3Pose, intr: &CameraIntrinsics, near: f64) -> Projection {
    let world_to_cam = pose.rotation.inverse();
    let p = world_to_cam * (surfel.mean - pose.translation);
    if !(p.z > near) {
        return Projection::Culled;
    }
    let (a, b) = surfel.tangent_axes();
    let axes = Matrix3x2::from_columns(&[world_to_cam * a, world_to_cam * b]);
    let inv_z = 1.0 / p.z;
    let jac = Matrix2x3::new(
        intr.fx * inv_z,
        0.0,
        -intr.fx * p.x * inv_z * inv_z,
        0.0,
        intr.fy * inv_z,
        -intr.fy * p.y * inv_z * inv_z,
    );
    let m = jac * axes;
    let cov = m * m.transpose();
    let (u, v) = intr.project(&p);
    Projection::Visible(Footprint {
        center: Vector2::new(u, v),
        covariance: Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(0, 1)], cov[(1, 1)]),
        depth: p.z,
    })
}

/// One blended contribution at a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    /// Index into the rendered surfel list.
    pub surfel: u32,
    /// Gaussian falloff `exp(-0.5 d^T Sigma^-1 d)` before opacity.
    pub falloff: f64,
    /// Blending weight `w_i`, after clamping.
    pub weight: f64,
    /// Transmittance in front of this contribution.
    pub transmittance: f64,
    /// Camera-frame depth of the surfel mean.
    pub depth: f64,
    /// Whether `weight` was clamped.
    pub clamped: bool,
}

/// Per-pixel ordered contribution lists, row-major.
#[derive(Clone, Debug, Default)]
pub struct RenderTrace {
    pub pixels: Vec<Vec<Contribution>>,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub buffers: RenderBuffers,
    /// Surfels skipped because of an ill-conditioned screen covariance.
    pub degenerate: usize,
    pub culled: usize,
}

struct Splat {
    index: u32,
    depth: f64,
    center: Vector2<f64>,
    conic: Matrix2<f64>,
    x_range: (usize, usize),
    y_range: (usize, usize),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Rasterizer {
    pub config: RenderConfig,
}

impl Rasterizer {
    pub fn new(config: RenderConfig) -> Self {
        Self { config }
    }

    pub fn render(&self, surfels: &[Surfel], pose: &Se3Pose, intr: &CameraIntrinsics) -> RenderOutput {
        self.rasterize(surfels, pose, intr, None)
    }

    pub fn render_traced(
        &self,
        surfels: &[Surfel],
        pose: &Se3Pose,
        intr: &CameraIntrinsics,
    ) -> (RenderOutput, RenderTrace) {
        let mut trace = RenderTrace {
            pixels: vec![Vec::new(); intr.num_pixels()],
        };
        let out = self.rasterize(surfels, pose, intr, Some(&mut trace));
        (out, trace)
    }

    /// Indices of the surfels that reach the rasterization stage, ascending.
    ///
    /// Rendering only these gives the same image as rendering all of them.
    pub fn visible_indices(&self, surfels: &[Surfel], pose: &Se3Pose, intr: &CameraIntrinsics) -> Vec<usize> {
        let mut out: Vec<usize> = self.splats(surfels, pose, intr).0.iter().map(|s| s.index as usize).collect();
        out.sort_unstable();
        out
    }

    fn splats(&self, surfels: &[Surfel], pose: &Se3Pose, intr: &CameraIntrinsics) -> (Vec<Splat>, usize, usize) {
        let cfg = &self.config;
        let mut splats = Vec::with_capacity(surfels.len());
        let (mut culled, mut degenerate) = (0, 0);
        for (index, surfel) in surfels.iter().enumerate() {
            let fp = match project_with_near(surfel, pose, intr, cfg.near) {
                Projection::Visible(fp) => fp,
                Projection::Culled => {
                    culled += 1;
                    continue;
                }
            };
            let (mx, my) = (cfg.frustum_margin * intr.width as f64, cfg.frustum_margin * intr.height as f64);
            if fp.center.x < -mx
                || fp.center.x > intr.width as f64 + mx
                || fp.center.y < -my
                || fp.center.y > intr.height as f64 + my
            {
                culled += 1;
                continue;
            }
            let eig = fp.covariance.symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0) || hi / lo > cfg.max_condition || !hi.is_finite() {
                degenerate += 1;
                continue;
            }
            let Some(conic) = fp.covariance.try_inverse() else {
                degenerate += 1;
                continue;
            };
            let rx = cfg.cull_sigma * fp.covariance[(0, 0)].sqrt();
            let ry = cfg.cull_sigma * fp.covariance[(1, 1)].sqrt();
            let (Some(x_range), Some(y_range)) = (
                pixel_range(fp.center.x - rx, fp.center.x + rx, intr.width),
                pixel_range(fp.center.y - ry, fp.center.y + ry, intr.height),
            ) else {
                culled += 1;
                continue;
            };
            splats.push(Splat {
                index: index as u32,
                depth: fp.depth,
                center: fp.center,
                conic,
                x_range,
                y_range,
            });
        }
        splats.sort_by(|a, b| {
            a.depth
                .total_cmp(&b.depth)
                .then_with(|| surfel_order(&surfels[a.index as usize], &surfels[b.index as usize]))
                .then_with(|| a.index.cmp(&b.index))
        });
        (splats, culled, degenerate)
    }

    fn rasterize(
        &self,
        surfels: &[Surfel],
        pose: &Se3Pose,
        intr: &CameraIntrinsics,
        mut trace: Option<&mut RenderTrace>,
    ) -> RenderOutput {
        let cfg = &self.config;
        let (w, h) = (intr.width, intr.height);
        let mut buffers = RenderBuffers::new(w, h);
        let mut transmittance = vec![1.0f64; w * h];
        let (splats, culled, degenerate) = self.splats(surfels, pose, intr);

        for splat in &splats {
            let surfel = &surfels[splat.index as usize];
            for y in splat.y_range.0..splat.y_range.1 {
                for x in splat.x_range.0..splat.x_range.1 {
                    let idx = y * w + x;
                    let t = transmittance[idx];
                    if t < cfg.min_transmittance {
                        continue;
                    }
                    let d = Vector2::new(x as f64 - splat.center.x, y as f64 - splat.center.y);
                    let power = (d.transpose() * splat.conic * d)[(0, 0)];
                    let falloff = (-0.5 * power).exp();
                    let raw = surfel.opacity * falloff;
                    let clamped = raw > cfg.weight_clamp;
                    let weight = if clamped { cfg.weight_clamp } else { raw };
                    if weight <= 0.0 {
                        continue;
                    }
                    let contrib = weight * t;
                    let c = &mut buffers.color.data[idx];
                    c[0] += surfel.color.x * contrib;
                    c[1] += surfel.color.y * contrib;
                    c[2] += surfel.color.z * contrib;
                    buffers.depth.data[idx] += splat.depth * contrib;
                    buffers.accumulation.data[idx] += contrib;
                    transmittance[idx] = t * (1.0 - weight);
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.pixels[idx].push(Contribution {
                            surfel: splat.index,
                            falloff,
                            weight,
                            transmittance: t,
                            depth: splat.depth,
                            clamped,
                        });
                    }
                }
            }
        }
        RenderOutput {
            buffers,
            degenerate,
            culled,
        }
    }
}

/// Renders with the default configuration.
pub fn render(surfels: &[Surfel], pose: &Se3Pose, intr: &CameraIntrinsics) -> RenderBuffers {
    Rasterizer::default().render(surfels, pose, intr).buffers
}

/// Half-open integer pixel range covering `[lo, hi]`, clipped to `[0, n)`.
fn pixel_range(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    if !(hi >= 0.0) || !(lo <= (n - 1) as f64) {
        return None;
    }
    let start = lo.ceil().max(0.0) as usize;
    let end = (hi.floor() as usize + 1).min(n);
    (start < end).then_some((start, end))
}

/// Content ordering used to break depth ties independently of list order.
fn surfel_order(a: &Surfel, b: &Surfel) -> Ordering {
    let key = |s: &Surfel| -> [f64; 13] {
        let q = s.rotation.quaternion().coords;
        [
            s.mean.x, s.mean.y, s.mean.z, q.x, q.y, q.z, q.w, s.scale.x, s.scale.y, s.opacity, s.color.x,
            s.color.y, s.color.z,
        ]
    };
    let (ka, kb) = (key(a), key(b));
    ka.iter()
        .zip(&kb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Blending weights of one surfel at the pixels it reaches, as `(pixel, w_i * T_i)`.
pub fn contribution_weights(trace: &RenderTrace) -> Vec<Vec<(usize, f64)>> {
    let max = trace
        .pixels
        .iter()
        .flat_map(|p| p.iter().map(|c| c.surfel as usize + 1))
        .max()
        .unwrap_or(0);
    let mut out = vec![Vec::new(); max];
    for (pixel, contribs) in trace.pixels.iter().enumerate() {
        for c in contribs {
            out[c.surfel as usize].push((pixel, c.weight * c.transmittance));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 50.0, 32.0, 24.0, 64, 48).unwrap()
    }

    #[test]
    fn on_axis_surfel_is_isotropic() {
        let s = Surfel::isotropic(Vec3::new(0.0, 0.0, 2.0), 0.1, 1.0, Vec3::new(1.0, 0.0, 0.0));
        let Projection::Visible(fp) = project_surfel(&s, &Se3Pose::identity(), &intr()) else {
            panic!("culled");
        };
        let std = 50.0 * 0.1 / 2.0;
        assert_relative_eq!(fp.center, Vector2::new(32.0, 24.0), epsilon = 1e-12);
        assert_relative_eq!(fp.covariance, Matrix2::identity() * std * std, epsilon = 1e-12);
        assert_eq!(fp.depth, 2.0);
    }

    #[test]
    fn rotation_about_view_axis_swaps_eigenvalues() {
        let mut s = Surfel::isotropic(Vec3::new(0.0, 0.0, 2.0), 0.1, 1.0, Vec3::zeros());
        s.scale = Vector2::new(0.2, 0.05);
        let a = match project_surfel(&s, &Se3Pose::identity(), &intr()) {
            Projection::Visible(fp) => fp.covariance,
            Projection::Culled => panic!(),
        };
        s.rotation = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let b = match project_surfel(&s, &Se3Pose::identity(), &intr()) {
            Projection::Visible(fp) => fp.covariance,
            Projection::Culled => panic!(),
        };
        assert_relative_eq!(a[(0, 0)], b[(1, 1)], max_relative = 1e-12);
        assert_relative_eq!(a[(1, 1)], b[(0, 0)], max_relative = 1e-12);
    }

    #[test]
    fn behind_camera_is_culled() {
        let s = Surfel::isotropic(Vec3::new(0.0, 0.0, -1.0), 0.1, 1.0, Vec3::zeros());
        assert_eq!(project_surfel(&s, &Se3Pose::identity(), &intr()), Projection::Culled);
    }

    #[test]
    fn empty_scene_renders_zero() {
        let b = render(&[], &Se3Pose::identity(), &intr());
        assert!(b.color.data.iter().all(|c| *c == [0.0; 3]));
        assert!(b.depth.data.iter().all(|d| *d == 0.0));
        assert!(b.accumulation.data.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn single_opaque_surfel_at_pixel_center() {
        let s = Surfel::isotropic(Vec3::new(0.0, 0.0, 3.0), 0.1, 1.0, Vec3::new(1.0, 0.0, 0.0));
        let b = render(&[s], &Se3Pose::identity(), &intr());
        assert_eq!(b.color.get(32, 24), [1.0, 0.0, 0.0]);
        assert_eq!(b.depth.get(32, 24), 3.0);
        assert_eq!(b.accumulation.get(32, 24), 1.0);
    }

    #[test]
    fn two_surfel_compositing() {
        let c1 = Vec3::new(0.2, 0.4, 0.6);
        let c2 = Vec3::new(1.0, 0.5, 0.0);
        // Equal screen footprints: radius scales with depth.
        let front = Surfel::isotropic(Vec3::new(0.0, 0.0, 1.0), 0.05, 0.5, c1);
        let back = Surfel::isotropic(Vec3::new(0.0, 0.0, 2.0), 0.1, 0.5, c2);
        let b = render(&[back, front], &Se3Pose::identity(), &intr());
        let expected = c1 * 0.5 + c2 * 0.25;
        let got = b.color.get(32, 24);
        for k in 0..3 {
            assert_eq!(got[k], expected[k]);
        }
        assert_eq!(b.accumulation.get(32, 24), 0.75);
        assert_eq!(b.depth.get(32, 24), 0.5 * 1.0 + 0.25 * 2.0);
    }

    #[test]
    fn clamp_limits_weight() {
        let s = Surfel::isotropic(Vec3::new(0.0, 0.0, 3.0), 0.1, 1.0, Vec3::new(1.0, 0.0, 0.0));
        let r = Rasterizer::new(RenderConfig {
            weight_clamp: 0.999,
            ..RenderConfig::default()
        });
        let b = r.render(&[s], &Se3Pose::identity(), &intr()).buffers;
        assert_eq!(b.accumulation.get(32, 24), 0.999);
    }

    #[test]
    fn edge_on_surfel_is_degenerate() {
        let mut s = Surfel::isotropic(Vec3::new(0.0, 0.0, 2.0), 0.1, 1.0, Vec3::zeros());
        s.rotation = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), std::f64::consts::FRAC_PI_2);
        let out = Rasterizer::default().render(&[s], &Se3Pose::identity(), &intr());
        assert_eq!(out.degenerate, 1);
    }

    #[test]
    fn pixel_range_clipping() {
        assert_eq!(pixel_range(-3.0, 2.5, 10), Some((0, 3)));
        assert_eq!(pixel_range(8.2, 20.0, 10), Some((9, 10)));
        assert_eq!(pixel_range(10.5, 20.0, 10), None);
        assert_eq!(pixel_range(-5.0, -0.1, 10), None);
        assert_eq!(pixel_range(3.2, 3.8, 10), None);
    }
}
