//! File formats: TUM trajectories, binary PLY maps, prediction records, PNG
//! images, flat key-value configs, scene directories and metric reports.

mod images;
mod kv;
mod ply;
mod pred;
mod report;
mod scene_dir;
mod tum;

use std::path::Path;

pub use images::{quantize_rgb, read_depth_png, read_rgb_png, write_depth_png, write_rgb_png};
pub use kv::{format_kv, parse_kv};
pub use ply::{decode_ply, encode_ply, read_ply, write_ply};
pub use pred::{decode_prediction, encode_prediction, read_prediction, write_prediction};
pub use report::{read_report, write_report, ReportRow};
pub use scene_dir::{
    frame_file, read_intrinsics, read_scene_dir, write_intrinsics, write_scene_dir, LoadedScene, DEFAULT_DEPTH_SCALE,
    INTRINSICS_FILE, SCENE_CONFIG_FILE, SCENE_PLY_FILE, TRAJECTORY_GT_FILE,
};
pub use tum::{format_tum, parse_tum, read_tum, se3_track, write_tum};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
