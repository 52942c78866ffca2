use std::path::{Path, PathBuf};

use super::{
    create_dir, format_kv, parse_kv, read_ply, read_text, read_tum, se3_track, write_depth_png, write_ply,
    write_prediction, write_rgb_png, write_text, write_tum,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::oracle::{Oracle, SyntheticScene};
use crate::raster::CameraIntrinsics;
use crate::tracking::partition_ranges;

pub const SCENE_PLY_FILE: &str = "scene.ply";
pub const TRAJECTORY_GT_FILE: &str = "trajectory_gt.txt";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";
/// Configuration the scene and its predictions were simulated with.
pub const SCENE_CONFIG_FILE: &str = "simulation.cfg";
/// Depth PNG units per scene unit.
pub const DEFAULT_DEPTH_SCALE: f64 = 5000.0;

/// `<root>/<kind>/<frame:06>.<ext>`.
pub fn frame_file(root: &Path, kind: &str, frame: usize, ext: &str) -> PathBuf {
    root.join(kind).join(format!("{frame:06}.{ext}"))
}

pub fn write_intrinsics(path: &Path, intr: &CameraIntrinsics, depth_scale: f64) -> Result<()> {
    let entries = [
        ("fx", intr.fx.to_string()),
        ("fy", intr.fy.to_string()),
        ("cx", intr.cx.to_string()),
        ("cy", intr.cy.to_string()),
        ("width", intr.width.to_string()),
        ("height", intr.height.to_string()),
        ("depth_scale", depth_scale.to_string()),
    ];
    write_text(path, &format_kv(&entries))
}

/// Intrinsics and depth scale.
pub fn read_intrinsics(path: &Path) -> Result<(CameraIntrinsics, f64)> {
    let entries = parse_kv(&read_text(path)?)?;
    let get = |key: &str| -> Result<&str> {
        entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(path.display().to_string(), format!("missing {key}")))
    };
    let f = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|e: std::num::ParseFloatError| Error::parse(path.display().to_string(), e.to_string()))
    };
    let u = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::parse(path.display().to_string(), e.to_string()))
    };
    let intr = CameraIntrinsics::new(f("fx")?, f("fy")?, f("cx")?, f("cy")?, u("width")?, u("height")?)?;
    let depth_scale = f("depth_scale")?;
    if !(depth_scale > 0.0) {
        return Err(Error::parse(path.display().to_string(), "depth_scale must be positive"));
    }
    Ok((intr, depth_scale))
}

/// Writes the ground-truth scene, its rendered images and the frontend's
/// predictions under the configured clip length.
pub fn write_scene_dir(root: &Path, oracle: &Oracle, cfg: &RunConfig) -> Result<()> {
    create_dir(root)?;
    for sub in ["rgb", "depth", "pred"] {
        create_dir(&root.join(sub))?;
    }
    let scene = &oracle.scene;
    write_ply(&root.join(SCENE_PLY_FILE), &scene.surfels)?;
    write_tum(&root.join(TRAJECTORY_GT_FILE), &se3_track(&scene.trajectory), false)?;
    write_intrinsics(&root.join(INTRINSICS_FILE), &scene.intrinsics, DEFAULT_DEPTH_SCALE)?;
    write_text(&root.join(SCENE_CONFIG_FILE), &cfg.to_text())?;
    for f in 0..oracle.num_frames() {
        let view = oracle.view(f);
        write_rgb_png(&frame_file(root, "rgb", f, "png"), &view.rgb)?;
        write_depth_png(&frame_file(root, "depth", f, "png"), &view.depth, DEFAULT_DEPTH_SCALE)?;
    }
    let ranges = partition_ranges(oracle.num_frames(), cfg.tracking.clip_length)?;
    for (m, frames) in ranges.iter().enumerate() {
        let state = oracle.submap_state(m as u32, frames[0]);
        let owned = if m == 0 { &frames[..] } else { &frames[1..] };
        for &f in owned {
            write_prediction(&frame_file(root, "pred", f, "bin"), &oracle.predict_frame(f, &state))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub scene: SyntheticScene,
    /// Simulation settings stored with the scene.
    pub config: RunConfig,
    pub depth_scale: f64,
}

impl LoadedScene {
    /// Rebuilds the frontend simulator the scene was generated with.
    pub fn oracle(&self) -> Result<Oracle> {
        Oracle::new(self.scene.clone(), self.config.noise, self.config.oracle)
    }
}

pub fn read_scene_dir(root: &Path) -> Result<LoadedScene> {
    let surfels = read_ply(&root.join(SCENE_PLY_FILE))?;
    let trajectory = read_tum(&root.join(TRAJECTORY_GT_FILE))?
        .into_iter()
        .map(|(t, p)| (t, p.to_se3()))
        .collect();
    let (intrinsics, depth_scale) = read_intrinsics(&root.join(INTRINSICS_FILE))?;
    let config_path = root.join(SCENE_CONFIG_FILE);
    let config = if config_path.exists() {
        RunConfig::from_file(&config_path)?
    } else {
        RunConfig::default()
    };
    let scene = SyntheticScene {
        surfels,
        trajectory,
        intrinsics,
    };
    scene.validate()?;
    Ok(LoadedScene {
        scene,
        config,
        depth_scale,
    })
}
