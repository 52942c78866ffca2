use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{stored_quat, Vec3};
use crate::raster::Surfel;

const PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "qw", "qx", "qy", "qz", "sx", "sy", "opacity", "red", "green", "blue",
    "confidence",
];

/// Binary little-endian PLY: doubles for geometry and appearance, `uint`
/// keyframe and submap ids.
pub fn encode_ply(surfels: &[Surfel]) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", surfels.len()));
    for name in PROPERTIES {
        header.push_str(&format!("property double {name}\n"));
    }
    header.push_str("property uint kf_id\nproperty uint submap_id\nend_header\n");
    let mut out = header.into_bytes();
    for s in surfels {
        let n = s.normal();
        let q = s.rotation.quaternion();
        let values = [
            s.mean.x, s.mean.y, s.mean.z, n.x, n.y, n.z, q.w, q.i, q.j, q.k, s.scale.x, s.scale.y, s.opacity,
            s.color.x, s.color.y, s.color.z, s.confidence,
        ];
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&s.keyframe_id.to_le_bytes());
        out.extend_from_slice(&s.submap_id.to_le_bytes());
    }
    out
}

#[derive(Clone, Copy)]
enum Scalar {
    U8,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "uchar" | "uint8" => Scalar::U8,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::U8 => 1,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::U8 => b[0] as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Reads binary little-endian vertex PLY files with at least position,
/// quaternion, scales, opacity and color.
///
/// `uchar` colors are divided by 255; missing ids default to 0 and missing
/// confidence to 1.
pub fn decode_ply(bytes: &[u8]) -> Result<Vec<Surfel>> {
    let err = |m: String| Error::parse("ply", m);
    let end = b"end_header\n";
    let header_len = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| err("missing end_header".into()))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..header_len]).map_err(|e| err(e.to_string()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(err("missing ply magic".into()));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => return Err(err(format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| err(e.to_string()))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err(err("list properties are not supported".into())),
            ["property", ty, name] if in_vertex => {
                let ty = Scalar::parse(ty).ok_or_else(|| err(format!("unknown type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            _ => {}
        }
    }
    let count = count.ok_or_else(|| err("no vertex element".into()))?;
    let mut offsets = HashMap::new();
    let mut stride = 0;
    for (name, ty) in &props {
        offsets.insert(name.as_str(), (stride, *ty));
        stride += ty.size();
    }
    let body = &bytes[header_len..];
    if body.len() < count * stride {
        return Err(err(format!("expected {} vertex bytes, found {}", count * stride, body.len())));
    }
    let field = |rec: &[u8], name: &str| offsets.get(name).map(|(o, ty)| ty.read(&rec[*o..]));
    let required = |rec: &[u8], name: &str| field(rec, name).ok_or_else(|| err(format!("missing property {name}")));
    let color_scale = match offsets.get("red") {
        Some((_, Scalar::U8)) => 1.0 / 255.0,
        _ => 1.0,
    };
    let mut out = Vec::with_capacity(count);
    for rec in body[..count * stride].chunks_exact(stride) {
        out.push(Surfel {
            mean: Vec3::new(required(rec, "x")?, required(rec, "y")?, required(rec, "z")?),
            rotation: stored_quat(required(rec, "qw")?, required(rec, "qx")?, required(rec, "qy")?, required(rec, "qz")?),
            scale: Vector2::new(required(rec, "sx")?, required(rec, "sy")?),
            opacity: required(rec, "opacity")?,
            color: Vec3::new(required(rec, "red")?, required(rec, "green")?, required(rec, "blue")?) * color_scale,
            confidence: field(rec, "confidence").unwrap_or(1.0),
            keyframe_id: field(rec, "kf_id").unwrap_or(0.0) as u32,
            submap_id: field(rec, "submap_id").unwrap_or(0.0) as u32,
        });
    }
    Ok(out)
}

pub fn write_ply(path: &Path, surfels: &[Surfel]) -> Result<()> {
    std::fs::write(path, encode_ply(surfels)).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<Vec<Surfel>> {
    decode_ply(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
