use std::path::Path;

use super::{read_text, write_text};
use crate::error::{Error, Result};
use crate::geometry::{stored_quat, Se3Pose, Sim3, Vec3};

/// `timestamp tx ty tz qx qy qz qw`, or with `with_scale` a scale column
/// right after the timestamp.
pub fn format_tum(poses: &[(f64, Sim3)], with_scale: bool) -> String {
    let mut out = String::new();
    for (t, p) in poses {
        let q = &p.rotation;
        let (x, y, z) = (p.translation.x, p.translation.y, p.translation.z);
        if with_scale {
            out.push_str(&format!("{t} {} {x} {y} {z} {} {} {} {}\n", p.scale, q.i, q.j, q.k, q.w));
        } else {
            out.push_str(&format!("{t} {x} {y} {z} {} {} {} {}\n", q.i, q.j, q.k, q.w));
        }
    }
    out
}

/// Parses 8-column TUM lines, or 9-column lines with a scale column.
///
/// Blank lines and `#` comments are skipped.
pub fn parse_tum(text: &str) -> Result<Vec<(f64, Sim3)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = || format!("trajectory line {}", lineno + 1);
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e.to_string())))
            .collect::<Result<_>>()?;
        let (t, scale, rest) = match v.len() {
            8 => (v[0], 1.0, &v[1..]),
            9 => (v[0], v[1], &v[2..]),
            n => return Err(Error::parse(ctx(), format!("expected 8 or 9 columns, got {n}"))),
        };
        if !(scale > 0.0) {
            return Err(Error::parse(ctx(), format!("non-positive scale {scale}")));
        }
        let rotation = stored_quat(rest[6], rest[3], rest[4], rest[5]);
        out.push((t, Sim3::new(scale, rotation, Vec3::new(rest[0], rest[1], rest[2]))));
    }
    Ok(out)
}

pub fn write_tum(path: &Path, poses: &[(f64, Sim3)], with_scale: bool) -> Result<()> {
    write_text(path, &format_tum(poses, with_scale))
}

pub fn read_tum(path: &Path) -> Result<Vec<(f64, Sim3)>> {
    parse_tum(&read_text(path)?)
}

/// SE(3) trajectory as unit-scale Sim(3) poses.
pub fn se3_track(poses: &[(f64, Se3Pose)]) -> Vec<(f64, Sim3)> {
    poses.iter().map(|(t, p)| (*t, p.to_sim3(1.0))).collect()
}
