//! Loop candidate detection, relative scale estimation and Sim(3) loop constraints.

use crate::error::{Error, Result};
use crate::geometry::{Se3Pose, Sim3, Vec3};
use crate::oracle::SubmapDescriptor;
pub use crate::pose_graph::{EdgeKind, Sim3Constraint};

/// Minimum number of correspondences for scale estimation.
pub const MIN_SCALE_POINTS: usize = 10;
const DENOMINATOR_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoopCandidate {
    /// Current frame `j`.
    pub current_frame: usize,
    /// Historical frame `i`.
    pub historical_frame: usize,
    pub historical_submap: u32,
    pub current_submap: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopDetectorConfig {
    /// Candidates must be at least this many submaps older than the query.
    pub min_submap_gap: u32,
    /// Maximum Euclidean distance between frame features.
    pub feature_threshold: f64,
    /// Minimum ground-truth covisibility.
    pub covisibility_threshold: f64,
}

impl Default for LoopDetectorConfig {
    fn default() -> Self {
        Self {
            min_submap_gap: 2,
            feature_threshold: 0.6,
            covisibility_threshold: 0.5,
        }
    }
}

fn feature_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Best matching historical frame for `frame_id`, if any passes both gates.
///
/// `covisibility(i, j)` is the fraction of frame `j`'s content visible in frame `i`.
/// Only frames owned by a submap are eligible, so a submap's first frame is
/// skipped unless it is submap 0.
pub fn detect(
    bag: &[SubmapDescriptor],
    current_submap: u32,
    frame_id: usize,
    feature: &[f64],
    cfg: &LoopDetectorConfig,
    covisibility: impl Fn(usize, usize) -> f64,
) -> Vec<LoopCandidate> {
    let mut best: Option<(f64, f64, LoopCandidate)> = None;
    for desc in bag {
        if desc.submap_id + cfg.min_submap_gap > current_submap {
            continue;
        }
        let skip = usize::from(desc.submap_id > 0);
        for (&i, f) in desc.frame_ids.iter().zip(&desc.frame_features).skip(skip) {
            let dist = feature_distance(f, feature);
            if dist >= cfg.feature_threshold {
                continue;
            }
            let covis = covisibility(i, frame_id);
            if covis < cfg.covisibility_threshold {
                continue;
            }
            let better = match &best {
                None => true,
                Some((d, c, _)) => dist < *d || (dist == *d && covis > *c),
            };
            if better {
                best = Some((
                    dist,
                    covis,
                    LoopCandidate {
                        current_frame: frame_id,
                        historical_frame: i,
                        historical_submap: desc.submap_id,
                        current_submap,
                    },
                ));
            }
        }
    }
    best.map(|(_, _, c)| vec![c]).unwrap_or_default()
}

/// Settings of the relative scale estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScaleConfig {
    /// Re-solve once after dropping residuals beyond 3 scaled MADs.
    pub outlier_rejection: bool,
}

/// Least-squares `s` minimizing `sum |b_k - s a_k|^2`.
pub fn estimate_scale(points_b: &[Vec3], points_a: &[Vec3]) -> Result<f64> {
    if points_b.len() != points_a.len() {
        return Err(Error::LengthMismatch {
            left: points_b.len(),
            right: points_a.len(),
        });
    }
    if points_a.len() < MIN_SCALE_POINTS {
        return Err(Error::InsufficientData(format!(
            "scale estimation needs at least {MIN_SCALE_POINTS} points, got {}",
            points_a.len()
        )));
    }
    closed_form(points_b.iter().zip(points_a))
}

fn closed_form<'a>(pairs: impl Iterator<Item = (&'a Vec3, &'a Vec3)>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (b, a) in pairs {
        num += b.dot(a);
        den += a.norm_squared();
    }
    if !(den > DENOMINATOR_EPS) {
        return Err(Error::DegenerateConfiguration(format!(
            "scale denominator {den} is too small"
        )));
    }
    let s = num / den;
    if !(s > 0.0) {
        return Err(Error::RelocalizationInconsistent(s));
    }
    Ok(s)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// [`estimate_scale`] with optional one-pass 3-MAD outlier rejection.
pub fn estimate_scale_with(points_b: &[Vec3], points_a: &[Vec3], cfg: &ScaleConfig) -> Result<f64> {
    let s = estimate_scale(points_b, points_a)?;
    if !cfg.outlier_rejection {
        return Ok(s);
    }
    let residuals: Vec<f64> = points_b
        .iter()
        .zip(points_a)
        .map(|(b, a)| (b - a * s).norm())
        .collect();
    let mut sorted = residuals.clone();
    let med = median(&mut sorted);
    let mut deviations: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    let mad = 1.4826 * median(&mut deviations);
    let limit = med + 3.0 * mad;
    let kept = points_b
        .iter()
        .zip(points_a)
        .zip(&residuals)
        .filter(|(_, r)| **r <= limit)
        .map(|(pair, _)| pair);
    closed_form(kept)
}

/// Loop constraint from the relocalized pose `T_j^a`, the historical pose
/// `T_i^a` and the relative scale `s`.
///
/// The measurement maps frame `i` (submap `a` units) into frame `j` (submap
/// `b` units): `x -> s (R x + t)` with `(R, t) = (T_j^a)^-1 T_i^a`.
pub fn build_constraint(
    j: usize,
    i: usize,
    reloc_pose: &Se3Pose,
    hist_pose: &Se3Pose,
    scale: f64,
    information: f64,
) -> Result<Sim3Constraint> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::RelocalizationInconsistent(scale));
    }
    let rel = reloc_pose.inverse().compose(hist_pose);
    Ok(Sim3Constraint {
        from: j,
        to: i,
        measurement: Sim3::new(scale, rel.rotation, rel.translation * scale),
        information,
        kind: EdgeKind::Loop,
    })
}

/// Writes constraints as `EDGE_SIM3` lines.
pub fn constraints_to_text(constraints: &[Sim3Constraint]) -> String {
    constraints.iter().map(|c| c.to_line() + "\n").collect()
}
