use std::f64::consts::TAU;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Se3Pose, Vec3};
use crate::raster::{CameraIntrinsics, Surfel};

/// Parameters of the synthetic room and its camera orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    /// Half side length of the square room.
    pub extent: f64,
    pub room_height: f64,
    pub surfel_count: usize,
    pub seed: u64,
    pub num_frames: usize,
    pub orbit_radius: f64,
    pub camera_height: f64,
    /// Downward tilt of the viewing direction, radians.
    pub camera_pitch: f64,
    pub frame_rate: f64,
    pub num_boxes: usize,
    pub intrinsics: CameraIntrinsics,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            extent: 2.0,
            room_height: 2.4,
            surfel_count: 5000,
            seed: 1,
            num_frames: 200,
            orbit_radius: 0.5,
            camera_height: 1.2,
            camera_pitch: 0.15,
            frame_rate: 30.0,
            num_boxes: 4,
            intrinsics: CameraIntrinsics::desk_scale(),
        }
    }
}

/// Ground-truth surfels, camera trajectory and intrinsics.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub surfels: Vec<Surfel>,
    /// `(timestamp, camera-to-world pose)`, strictly increasing in time.
    pub trajectory: Vec<(f64, Se3Pose)>,
    pub intrinsics: CameraIntrinsics,
}

impl SyntheticScene {
    pub fn num_frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn pose(&self, frame: usize) -> &Se3Pose {
        &self.trajectory[frame].1
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        self.trajectory[frame].0
    }

    /// Checks the structural invariants of a loaded or generated scene.
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.trajectory.is_empty() {
            return Err(Error::InsufficientData("scene has no frames".into()));
        }
        for w in self.trajectory.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config(format!(
                    "trajectory timestamps not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        Ok(())
    }
}

struct Rect {
    origin: Vec3,
    u: Vec3,
    v: Vec3,
    base_color: Vec3,
}

impl Rect {
    fn area(&self) -> f64 {
        self.u.norm() * self.v.norm()
    }
}

/// Camera-to-world rotation looking along `forward` with the image `y` axis pointing down.
pub fn look_rotation(forward: &Vec3) -> UnitQuaternion<f64> {
    let f = forward.normalize();
    let right = f.cross(&Vec3::z()).normalize();
    let down = f.cross(&right);
    let m = Matrix3::from_columns(&[right, down, f]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

fn room_rects(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Rect> {
    let (l, h) = (cfg.extent, cfg.room_height);
    let palette = [
        Vec3::new(0.85, 0.35, 0.3),
        Vec3::new(0.3, 0.7, 0.4),
        Vec3::new(0.3, 0.45, 0.85),
        Vec3::new(0.85, 0.75, 0.3),
        Vec3::new(0.55, 0.5, 0.45),
        Vec3::new(0.8, 0.8, 0.85),
    ];
    let mut rects = vec![
        Rect { origin: Vec3::new(l, -l, 0.0), u: Vec3::new(0.0, 2.0 * l, 0.0), v: Vec3::new(0.0, 0.0, h), base_color: palette[0] },
        Rect { origin: Vec3::new(l, l, 0.0), u: Vec3::new(-2.0 * l, 0.0, 0.0), v: Vec3::new(0.0, 0.0, h), base_color: palette[1] },
        Rect { origin: Vec3::new(-l, l, 0.0), u: Vec3::new(0.0, -2.0 * l, 0.0), v: Vec3::new(0.0, 0.0, h), base_color: palette[2] },
        Rect { origin: Vec3::new(-l, -l, 0.0), u: Vec3::new(2.0 * l, 0.0, 0.0), v: Vec3::new(0.0, 0.0, h), base_color: palette[3] },
        Rect { origin: Vec3::new(-l, -l, 0.0), u: Vec3::new(2.0 * l, 0.0, 0.0), v: Vec3::new(0.0, 2.0 * l, 0.0), base_color: palette[4] },
        Rect { origin: Vec3::new(-l, -l, h), u: Vec3::new(2.0 * l, 0.0, 0.0), v: Vec3::new(0.0, 2.0 * l, 0.0), base_color: palette[5] },
    ];
    let inner = cfg.orbit_radius + 0.6;
    let outer = l - 0.25;
    for _ in 0..cfg.num_boxes {
        let size = rng.random_range(0.25..0.45);
        let height = rng.random_range(0.3..0.9);
        let angle = rng.random_range(0.0..TAU);
        let radius = rng.random_range(inner..outer.max(inner + 1e-3));
        let c = Vec3::new(radius * angle.cos(), radius * angle.sin(), 0.0);
        let (cx, cy) = (
            c.x.clamp(-outer + size, outer - size),
            c.y.clamp(-outer + size, outer - size),
        );
        let color = Vec3::new(rng.random_range(0.2..0.9), rng.random_range(0.2..0.9), rng.random_range(0.2..0.9));
        let s = size;
        let corners = [
            Vec3::new(cx - s, cy - s, 0.0),
            Vec3::new(cx + s, cy - s, 0.0),
            Vec3::new(cx + s, cy + s, 0.0),
            Vec3::new(cx - s, cy + s, 0.0),
        ];
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            rects.push(Rect { origin: a, u: b - a, v: Vec3::new(0.0, 0.0, height), base_color: color });
        }
        rects.push(Rect {
            origin: Vec3::new(cx - s, cy - s, height),
            u: Vec3::new(2.0 * s, 0.0, 0.0),
            v: Vec3::new(0.0, 2.0 * s, 0.0),
            base_color: color * 0.8,
        });
    }
    rects
}

fn rect_surfels(rect: &Rect, count: usize, rng: &mut ChaCha8Rng, out: &mut Vec<Surfel>) {
    let (lu, lv) = (rect.u.norm(), rect.v.norm());
    let spacing = (lu * lv / count.max(1) as f64).sqrt();
    let nu = (lu / spacing).round().max(1.0) as usize;
    let nv = (lv / spacing).round().max(1.0) as usize;
    let (du, dv) = (rect.u / nu as f64, rect.v / nv as f64);
    let (eu, ev) = (rect.u / lu, rect.v / lv);
    let frame = Matrix3::from_columns(&[eu, ev, eu.cross(&ev)]);
    let base = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
    let freq = Vector2::new(rng.random_range(1.5..4.0), rng.random_range(1.5..4.0));
    let phase = rng.random_range(0.0..TAU);
    for i in 0..nu {
        for j in 0..nv {
            let a = i as f64 + 0.5 + rng.random_range(-0.25..0.25);
            let b = j as f64 + 0.5 + rng.random_range(-0.25..0.25);
            let mean = rect.origin + du * a + dv * b;
            let (x, y) = (a / nu as f64 * lu, b / nv as f64 * lv);
            let pattern = 0.5 + 0.5 * (freq.x * x + phase).sin() * (freq.y * y).cos();
            let color = (rect.base_color * (0.55 + 0.45 * pattern)
                + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.05)
                .map(|c| c.clamp(0.0, 1.0));
            let spin = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), rng.random_range(0.0..TAU));
            let radius = 0.65 * spacing;
            let aspect = rng.random_range(0.8..1.25);
            out.push(Surfel::new(
                mean,
                base * spin,
                Vector2::new(radius * aspect, radius / aspect),
                rng.random_range(0.85..0.98),
                color,
            ));
        }
    }
}

fn orbit_pose(cfg: &SceneConfig, theta: f64) -> Se3Pose {
    let position = Vec3::new(
        cfg.orbit_radius * theta.cos(),
        cfg.orbit_radius * theta.sin(),
        cfg.camera_height + 0.05 * (2.0 * theta).sin(),
    );
    let forward = Vec3::new(theta.cos(), theta.sin(), -cfg.camera_pitch.tan());
    Se3Pose::new(look_rotation(&forward), position)
}

/// Builds a textured room with boxes and a single closed orbit that ends where it starts.
pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.intrinsics.validate()?;
    if cfg.surfel_count < 100 {
        return Err(Error::Config(format!("surfel count {} < 100", cfg.surfel_count)));
    }
    if cfg.num_frames < 2 {
        return Err(Error::Config("at least two frames are required".into()));
    }
    if !(cfg.orbit_radius >= 0.0) || cfg.extent < cfg.orbit_radius + 1.0 || cfg.room_height <= cfg.camera_height {
        return Err(Error::Config(format!(
            "room extent {} too small for orbit radius {} and camera height {}",
            cfg.extent, cfg.orbit_radius, cfg.camera_height
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rects = room_rects(cfg, &mut rng);
    let total_area: f64 = rects.iter().map(Rect::area).sum();
    let mut surfels = Vec::with_capacity(cfg.surfel_count + rects.len());
    for rect in &rects {
        let count = (cfg.surfel_count as f64 * rect.area() / total_area).round() as usize;
        rect_surfels(rect, count.max(4), &mut rng, &mut surfels);
    }

    let trajectory = (0..cfg.num_frames)
        .map(|t| {
            let theta = TAU * t as f64 / (cfg.num_frames - 1) as f64;
            (t as f64 / cfg.frame_rate, orbit_pose(cfg, theta))
        })
        .collect();
    let scene = SyntheticScene {
        surfels,
        trajectory,
        intrinsics: cfg.intrinsics,
    };
    scene.validate()?;
    Ok(scene)
}
