use std::ops::Mul;

use nalgebra::{Matrix4, UnitQuaternion};

use super::rotation::{canonicalize, quat_mul, Quat, Vec3};
use super::sim3::Sim3;

/// Rigid transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Se3Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Se3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se3Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self {
            rotation: canonicalize(&rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }

    pub fn compose(&self, other: &Se3Pose) -> Self {
        Self::new(
            quat_mul(&self.rotation, &other.rotation),
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn act(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        self.to_sim3(1.0).to_matrix()
    }

    /// Embeds into Sim(3) with the given scale.
    pub fn to_sim3(&self, scale: f64) -> Sim3 {
        Sim3::new(scale, self.rotation, self.translation)
    }
}

impl Mul for Se3Pose {
    type Output = Se3Pose;

    fn mul(self, rhs: Se3Pose) -> Se3Pose {
        self.compose(&rhs)
    }
}
