//! Alpha-blends a handful of surfels and writes color and depth images.
//!
//! `cargo run --example rasterize -- out_dir`

use std::path::PathBuf;

use surfel_slam::geometry::{Se3Pose, Vec3};
use surfel_slam::io::{create_dir, write_depth_png, write_rgb_png, DEFAULT_DEPTH_SCALE};
use surfel_slam::raster::{render, CameraIntrinsics, Surfel};

fn main() -> surfel_slam::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "rasterize_out".into()));
    let intr = CameraIntrinsics::desk_scale();
    let surfels = [
        Surfel::isotropic(Vec3::new(-0.3, 0.0, 2.0), 0.25, 0.9, Vec3::new(0.9, 0.2, 0.1)),
        Surfel::isotropic(Vec3::new(0.2, 0.1, 2.5), 0.35, 0.7, Vec3::new(0.1, 0.5, 0.9)),
        Surfel::isotropic(Vec3::new(0.0, -0.2, 1.5), 0.1, 1.0, Vec3::new(0.9, 0.9, 0.2)),
    ];
    let buffers = render(&surfels, &Se3Pose::identity(), &intr);
    let covered = buffers.accumulation.data.iter().filter(|a| **a > 0.5).count();
    println!("{covered} of {} pixels covered", intr.num_pixels());

    create_dir(&out)?;
    write_rgb_png(&out.join("color.png"), &buffers.color)?;
    write_depth_png(&out.join("depth.png"), &buffers.normalized_depth(0.5), DEFAULT_DEPTH_SCALE)?;
    println!("wrote {}", out.display());
    Ok(())
}
