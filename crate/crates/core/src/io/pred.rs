use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{stored_quat, Se3Pose, Vec3};
use crate::oracle::{FramePrediction, SurfelAttributes};

const ATTRIBUTES: usize = 12;

/// `frame_id u32`, pose `tx ty tz qx qy qz qw` as f64, `count u32`, then per
/// point `x y z` and `qw qx qy qz sx sy opacity r g b confidence pixel` as f32.
pub fn encode_prediction(pred: &FramePrediction) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + pred.points_cam.len() * 60);
    out.extend_from_slice(&(pred.frame_id as u32).to_le_bytes());
    let p = &pred.pose_in_submap;
    let q = &p.rotation;
    for v in [p.translation.x, p.translation.y, p.translation.z, q.i, q.j, q.k, q.w] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(pred.points_cam.len() as u32).to_le_bytes());
    for (x, a) in pred.points_cam.iter().zip(&pred.attrs) {
        let r = a.rotation.quaternion();
        let values: [f64; 3 + ATTRIBUTES] = [
            x.x,
            x.y,
            x.z,
            r.w,
            r.i,
            r.j,
            r.k,
            a.scale.x,
            a.scale.y,
            a.opacity,
            a.color.x,
            a.color.y,
            a.color.z,
            a.confidence,
            a.pixel as f64,
        ];
        for v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_prediction(bytes: &[u8]) -> Result<FramePrediction> {
    let err = |m: String| Error::parse("prediction", m);
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let chunk = bytes
            .get(pos..pos + n)
            .ok_or_else(|| err(format!("truncated at byte {pos}")))?;
        pos += n;
        Ok(chunk)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let frame_id = u32_at(take(4)?) as usize;
    let mut pose = [0.0; 7];
    for v in &mut pose {
        *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
    }
    let count = u32_at(take(4)?) as usize;
    let mut points_cam = Vec::with_capacity(count);
    let mut attrs = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = [0.0f64; 3 + ATTRIBUTES];
        for x in &mut v {
            *x = f32::from_le_bytes(take(4)?.try_into().unwrap()) as f64;
        }
        points_cam.push(Vec3::new(v[0], v[1], v[2]));
        attrs.push(SurfelAttributes {
            rotation: stored_quat(v[3], v[4], v[5], v[6]),
            scale: Vector2::new(v[7], v[8]),
            opacity: v[9],
            color: Vec3::new(v[10], v[11], v[12]),
            confidence: v[13],
            pixel: v[14] as u32,
        });
    }
    if pos != bytes.len() {
        return Err(err(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(FramePrediction {
        frame_id,
        pose_in_submap: Se3Pose::new(stored_quat(pose[6], pose[3], pose[4], pose[5]), Vec3::new(pose[0], pose[1], pose[2])),
        points_cam,
        attrs,
    })
}

pub fn write_prediction(path: &Path, pred: &FramePrediction) -> Result<()> {
    std::fs::write(path, encode_prediction(pred)).map_err(|e| Error::io(path, e))
}

pub fn read_prediction(path: &Path) -> Result<FramePrediction> {
    decode_prediction(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
