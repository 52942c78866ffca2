use nalgebra::{UnitQuaternion, Vector2};

use crate::geometry::{Quat, Vec3};

/// A planar 2D Gaussian primitive.
///
/// The disk spans the first two axes of `rotation`; its normal is the third.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surfel {
    pub mean: Vec3,
    pub rotation: Quat,
    pub scale: Vector2<f64>,
    pub opacity: f64,
    pub color: Vec3,
    pub confidence: f64,
    pub keyframe_id: u32,
    pub submap_id: u32,
}

impl Surfel {
    pub fn new(mean: Vec3, rotation: Quat, scale: Vector2<f64>, opacity: f64, color: Vec3) -> Self {
        Self {
            mean,
            rotation,
            scale,
            opacity: opacity.clamp(0.0, 1.0),
            color,
            confidence: 1.0,
            keyframe_id: 0,
            submap_id: 0,
        }
    }

    /// Axis-aligned disk facing `-z` in its own frame.
    pub fn isotropic(mean: Vec3, radius: f64, opacity: f64, color: Vec3) -> Self {
        Self::new(
            mean,
            UnitQuaternion::identity(),
            Vector2::new(radius, radius),
            opacity,
            color,
        )
    }

    pub fn normal(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }

    /// Tangent axes scaled by the 2D standard deviations.
    pub fn tangent_axes(&self) -> (Vec3, Vec3) {
        (
            self.rotation * Vec3::x() * self.scale.x,
            self.rotation * Vec3::y() * self.scale.y,
        )
    }
}
