//! Quaternion helpers shared by the SE(3) and Sim(3) types.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Below this rotation angle the exp/log maps switch to their series forms.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Flips `q` onto the `w >= 0` hemisphere.
///
/// When `w == 0` the first non-zero imaginary component is made positive, so
/// `canonicalize(q)` and `canonicalize(-q)` are bitwise identical.
pub fn canonicalize(q: &Quat) -> Quat {
    let c = q.quaternion().coords; // (x, y, z, w)
    let flip = if c.w != 0.0 {
        c.w < 0.0
    } else if c.x != 0.0 {
        c.x < 0.0
    } else if c.y != 0.0 {
        c.y < 0.0
    } else {
        c.z < 0.0
    };
    if flip {
        UnitQuaternion::new_unchecked(Quaternion::new(-c.w, -c.x, -c.y, -c.z))
    } else {
        UnitQuaternion::new_unchecked(Quaternion::new(c.w, c.x, c.y, c.z))
    }
}

/// Quaternion read back from a file: kept bit-for-bit when already unit
/// length, otherwise normalized.
pub fn stored_quat(w: f64, x: f64, y: f64, z: f64) -> Quat {
    let q = Quaternion::new(w, x, y, z);
    if (q.norm() - 1.0).abs() < 1e-12 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::from_quaternion(q)
    }
}

/// Quaternion constructor from `(w, x, y, z)` that normalizes and canonicalizes.
pub fn quat(w: f64, x: f64, y: f64, z: f64) -> Quat {
    canonicalize(&UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
}

/// Product with renormalization, keeping the unit norm within 1e-15 over long chains.
pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    UnitQuaternion::new_normalize(a.quaternion() * b.quaternion())
}

/// Aligns `q` to the hemisphere of `reference` (sign flip if their dot product is negative).
pub fn align(q: &Quat, reference: &Quat) -> Quaternion<f64> {
    if q.quaternion().dot(reference.quaternion()) < 0.0 {
        -*q.quaternion()
    } else {
        *q.quaternion()
    }
}

pub fn hat(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation vector to quaternion.
pub fn so3_exp(omega: &Vec3) -> Quat {
    let theta = omega.norm();
    let (w, k) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        ((0.5 * theta).cos(), (0.5 * theta).sin() / theta)
    };
    canonicalize(&UnitQuaternion::new_normalize(Quaternion::new(
        w,
        k * omega.x,
        k * omega.y,
        k * omega.z,
    )))
}

/// Principal-branch rotation vector of `q`; the angle is in `[0, pi]`.
pub fn so3_log(q: &Quat) -> Vec3 {
    let q = canonicalize(q);
    let v = q.imag();
    let n = v.norm();
    let w = q.w;
    if n < SMALL_ANGLE {
        let r2 = (n / w) * (n / w);
        v * (2.0 / w * (1.0 - r2 / 3.0))
    } else {
        let theta = 2.0 * n.atan2(w);
        v * (theta / n)
    }
}

/// Rotation angle of `q` in `[0, pi]`.
pub fn rotation_angle(q: &Quat) -> f64 {
    let q = canonicalize(q);
    2.0 * q.imag().norm().atan2(q.w)
}
