//! Similarity transforms `p -> s R p + t` and their 7-dimensional tangent space.
//!
//! Tangent vectors are ordered `[rho (3), omega (3), sigma (1)]`: translational
//! part, rotation vector and log-scale. The hat operator is
//!
//! ```text
//! | sigma I + [omega]x   rho |
//! |        0              0  |
//! ```
//!
//! so `exp` gives `s = e^sigma`, `R = exp([omega]x)` and `t = V rho` with
//! `V = integral_0^1 e^(sigma u) exp(u [omega]x) du`.

use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Rotation3, SVector, UnitQuaternion};

use super::rotation::{canonicalize, hat, quat, quat_mul, so3_exp, so3_log, Quat, Vec3};
use super::se3::Se3Pose;
use crate::error::{Error, Result};

pub type Vector7 = SVector<f64, 7>;

/// Below this magnitude the V-matrix coefficients use their Taylor forms.
pub const TAYLOR_THRESHOLD: f64 = 1e-5;

/// Element of Sim(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Quat,
    pub translation: Vec3,
}

/// Element of sim(3), `[rho, omega, sigma]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3Tangent(pub Vector7);

impl Sim3Tangent {
    pub fn new(rho: Vec3, omega: Vec3, sigma: f64) -> Self {
        Self(Vector7::from_column_slice(&[
            rho.x, rho.y, rho.z, omega.x, omega.y, omega.z, sigma,
        ]))
    }

    pub fn zero() -> Self {
        Self(Vector7::zeros())
    }

    pub fn rho(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn omega(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn sigma(&self) -> f64 {
        self.0[6]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// 4x4 Lie-algebra matrix.
    pub fn hat(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        let top = Matrix3::identity() * self.sigma() + hat(&self.omega());
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.rho());
        m
    }
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// # Panics
    /// If `scale` is not a positive finite number.
    pub fn new(scale: f64, rotation: Quat, translation: Vec3) -> Self {
        assert!(
            scale > 0.0 && scale.is_finite(),
            "Sim3 scale must be positive, got {scale}"
        );
        Self {
            scale,
            rotation: canonicalize(&rotation),
            translation,
        }
    }

    pub fn from_scale(scale: f64) -> Self {
        Self::new(scale, UnitQuaternion::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(1.0, UnitQuaternion::identity(), translation)
    }

    /// Composition: acting by `self.compose(b)` equals acting by `b` then `self`.
    pub fn compose(&self, b: &Sim3) -> Sim3 {
        Sim3::new(
            self.scale * b.scale,
            quat_mul(&self.rotation, &b.rotation),
            self.rotation * b.translation * self.scale + self.translation,
        )
    }

    pub fn inverse(&self) -> Sim3 {
        let r_inv = self.rotation.inverse();
        let s_inv = 1.0 / self.scale;
        Sim3::new(s_inv, r_inv, -(r_inv * self.translation) * s_inv)
    }

    pub fn act(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        let sr = self.rotation.to_rotation_matrix().into_inner() * self.scale;
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&sr);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Inverse of [`Sim3::to_matrix`]; the scale is the cube root of the determinant.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Sim3> {
        let sr: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let det = sr.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::DegenerateConfiguration(format!(
                "matrix block has determinant {det}"
            )));
        }
        let s = det.cbrt();
        let r = Rotation3::from_matrix(&(sr / s));
        Ok(Sim3::new(
            s,
            UnitQuaternion::from_rotation_matrix(&r),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        ))
    }

    /// Drops the scale.
    pub fn to_se3(&self) -> Se3Pose {
        Se3Pose::new(self.rotation, self.translation)
    }

    pub fn exp(v: &Sim3Tangent) -> Sim3 {
        let omega = v.omega();
        let sigma = v.sigma();
        let vm = v_matrix(&omega, sigma);
        Sim3::new(sigma.exp(), so3_exp(&omega), vm * v.rho())
    }

    /// Principal-branch logarithm.
    ///
    /// Fails with [`Error::BranchAmbiguity`] when the rotation angle is pi.
    pub fn log(&self) -> Result<Sim3Tangent> {
        let q = canonicalize(&self.rotation);
        if q.w.abs() < 1e-12 {
            return Err(Error::BranchAmbiguity {
                angle: std::f64::consts::PI,
            });
        }
        let omega = so3_log(&q);
        let sigma = self.scale.ln();
        let vm = v_matrix(&omega, sigma);
        let rho = vm
            .try_inverse()
            .ok_or_else(|| Error::DegenerateConfiguration("singular V matrix".into()))?
            * self.translation;
        Ok(Sim3Tangent::new(rho, omega, sigma))
    }

    /// Right retraction `self * exp(delta)`.
    pub fn retract(&self, delta: &Sim3Tangent) -> Sim3 {
        self.compose(&Sim3::exp(delta))
    }

    /// `s tx ty tz qx qy qz qw`.
    pub fn to_text(&self) -> String {
        let q = &self.rotation;
        format!(
            "{} {} {} {} {} {} {} {}",
            self.scale,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            q.i,
            q.j,
            q.k,
            q.w
        )
    }

    pub fn from_fields(fields: &[f64]) -> Result<Sim3> {
        if fields.len() != 8 {
            return Err(Error::parse(
                "sim3",
                format!("expected 8 numbers, got {}", fields.len()),
            ));
        }
        if !(fields[0] > 0.0) {
            return Err(Error::parse("sim3", format!("non-positive scale {}", fields[0])));
        }
        Ok(Sim3::new(
            fields[0],
            quat(fields[7], fields[4], fields[5], fields[6]),
            Vec3::new(fields[1], fields[2], fields[3]),
        ))
    }
}

impl fmt::Display for Sim3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Sim3 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields = s
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse("sim3", e.to_string()))?;
        Sim3::from_fields(&fields)
    }
}

impl Mul for Sim3 {
    type Output = Sim3;

    fn mul(self, rhs: Sim3) -> Sim3 {
        self.compose(&rhs)
    }
}

/// `integral_0^1 u^n e^(sigma u) du`.
fn exp_moment(n: u32, sigma: f64) -> f64 {
    if sigma.abs() <= 2.0 {
        // Power series sum_k sigma^k / (k! (n + k + 1)).
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..60u32 {
            let contrib = term / f64::from(n + k + 1);
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= sigma / f64::from(k + 1);
        }
        sum
    } else {
        let es = sigma.exp();
        let mut acc = sigma.exp_m1() / sigma;
        for k in 1..=n {
            acc = (es - f64::from(k) * acc) / sigma;
        }
        acc
    }
}

/// `V = a I + b W + c W^2` with `W = [omega]x`.
pub(crate) fn v_matrix(omega: &Vec3, sigma: f64) -> Matrix3<f64> {
    let theta = omega.norm();
    let a = scale_coefficient(sigma);
    let (b, c) = if theta < TAYLOR_THRESHOLD {
        rotation_coefficients_taylor(theta, sigma)
    } else {
        rotation_coefficients_closed(theta, sigma, a)
    };
    let w = hat(omega);
    Matrix3::identity() * a + w * b + w * w * c
}

/// `(e^sigma - 1) / sigma`.
fn scale_coefficient(sigma: f64) -> f64 {
    if sigma.abs() < TAYLOR_THRESHOLD {
        1.0 + sigma / 2.0 + sigma * sigma / 6.0 + sigma.powi(3) / 24.0 + sigma.powi(4) / 120.0
    } else {
        sigma.exp_m1() / sigma
    }
}

fn rotation_coefficients_taylor(theta: f64, sigma: f64) -> (f64, f64) {
    let t2 = theta * theta;
    (
        exp_moment(1, sigma) - t2 * exp_moment(3, sigma) / 6.0,
        exp_moment(2, sigma) / 2.0 - t2 * exp_moment(4, sigma) / 24.0,
    )
}

fn rotation_coefficients_closed(theta: f64, sigma: f64, a: f64) -> (f64, f64) {
    let es = sigma.exp();
    let (st, ct) = theta.sin_cos();
    let denom = sigma * sigma + theta * theta;
    let sin_int = (es * (sigma * st - theta * ct) + theta) / denom;
    let cos_int = (es * (sigma * ct + theta * st) - sigma) / denom;
    (sin_int / theta, (a - cos_int) / (theta * theta))
}
