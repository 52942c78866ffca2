use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{so3_exp, Se3Pose, Vec3};

/// Error model of the simulated frontend.
///
/// Each submap carries its own pose random walk that restarts at the submap
/// origin. The step at local index `k >= 1` has standard deviation
/// `std * (1 + warmup / k + forgetting * (k - 1))`: the first frames of a fresh
/// context are less reliable, and long contexts slowly lose track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Rotation step std, radians per frame.
    pub pose_rot_std: f64,
    /// Translation step std, scene units per frame.
    pub pose_trans_std: f64,
    /// Mean rotation step magnitude, radians per frame, along a per-seed direction.
    pub pose_rot_bias: f64,
    /// Mean translation step magnitude, scene units per frame.
    pub pose_trans_bias: f64,
    pub warmup: f64,
    pub forgetting: f64,
    /// Multiplicative scale change from one submap to the next.
    pub per_submap_scale_drift: f64,
    /// Std of additive noise on predicted points, prediction units.
    pub point_noise_std: f64,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pose_rot_std: 0.0005,
            pose_trans_std: 0.0005,
            pose_rot_bias: 0.003,
            pose_trans_bias: 0.0015,
            warmup: 1.0,
            forgetting: 0.06,
            per_submap_scale_drift: 1.02,
            point_noise_std: 0.005,
            rng_seed: 1,
        }
    }
}

impl NoiseModel {
    /// No pose noise, no point noise, no scale drift.
    pub fn zero(seed: u64) -> Self {
        Self {
            pose_rot_std: 0.0,
            pose_trans_std: 0.0,
            pose_rot_bias: 0.0,
            pose_trans_bias: 0.0,
            warmup: 0.0,
            forgetting: 0.0,
            per_submap_scale_drift: 1.0,
            point_noise_std: 0.0,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stds = [
            ("pose_rot_std", self.pose_rot_std),
            ("pose_trans_std", self.pose_trans_std),
            ("pose_rot_bias", self.pose_rot_bias),
            ("pose_trans_bias", self.pose_trans_bias),
            ("warmup", self.warmup),
            ("forgetting", self.forgetting),
            ("point_noise_std", self.point_noise_std),
        ];
        for (name, v) in stds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(self.per_submap_scale_drift > 0.0 && self.per_submap_scale_drift.is_finite()) {
            return Err(Error::Config(format!(
                "per_submap_scale_drift must be positive, got {}",
                self.per_submap_scale_drift
            )));
        }
        Ok(())
    }

    /// Scale state of submap `m`.
    pub fn scale_state(&self, submap: u32) -> f64 {
        self.per_submap_scale_drift.powi(submap as i32)
    }

    /// Step std multiplier at local index `k >= 1`.
    pub fn step_factor(&self, k: usize) -> f64 {
        let k = k.max(1) as f64;
        1.0 + self.warmup / k + self.forgetting * (k - 1.0)
    }

    fn is_noiseless_pose(&self) -> bool {
        self.pose_rot_std == 0.0 && self.pose_trans_std == 0.0 && self.pose_rot_bias == 0.0 && self.pose_trans_bias == 0.0
    }

    fn bias_directions(&self) -> (Vec3, Vec3) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.rng_seed, &[0xb1a5]));
        (unit_vector(&mut rng), unit_vector(&mut rng))
    }

    /// Accumulated noise after `k` steps of submap `submap`'s random walk.
    ///
    /// `scale` converts translation noise into prediction units.
    pub fn accumulated(&self, submap: u32, k: usize, scale: f64) -> Se3Pose {
        if self.is_noiseless_pose() || k == 0 {
            return Se3Pose::identity();
        }
        let (rot_dir, trans_dir) = self.bias_directions();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.rng_seed, &[1, submap as u64]));
        let mut acc = Se3Pose::identity();
        for j in 1..=k {
            let g = self.step_factor(j);
            let omega = (rot_dir * self.pose_rot_bias + gaussian3(&mut rng) * self.pose_rot_std) * g;
            let rho = (trans_dir * self.pose_trans_bias + gaussian3(&mut rng) * self.pose_trans_std) * g * scale;
            acc = Se3Pose::new(so3_exp(&omega), rho).compose(&acc);
        }
        acc
    }

    /// One independent zero-mean step, keyed by `parts`.
    pub fn single_step(&self, parts: &[u64], scale: f64) -> Se3Pose {
        if self.pose_rot_std == 0.0 && self.pose_trans_std == 0.0 {
            return Se3Pose::identity();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.rng_seed, parts));
        let omega = gaussian3(&mut rng) * self.pose_rot_std;
        let rho = gaussian3(&mut rng) * self.pose_trans_std * scale;
        Se3Pose::new(so3_exp(&omega), rho)
    }

    /// Deterministic generator for point noise keyed by `parts`.
    pub fn point_rng(&self, parts: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(stream_seed(self.rng_seed, parts))
    }
}

pub(crate) fn gaussian3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = gaussian3(rng);
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a key path.
pub fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, p| splitmix(acc ^ splitmix(*p)))
}
