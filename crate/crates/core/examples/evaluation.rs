//! Trajectory and image metrics.

use surfel_slam::evaluation::{ate_rmse_sim3, depth_l1_scale_aligned, psnr, ssim, DepthAlignment};
use surfel_slam::geometry::Vec3;
use surfel_slam::raster::{GrayImage, RgbImage};

fn main() -> surfel_slam::Result<()> {
    let gt: Vec<(f64, Vec3)> = (0..50).map(|k| (k as f64 * 0.1, Vec3::new((k as f64 * 0.1).cos(), (k as f64 * 0.1).sin(), 0.0))).collect();
    // A shrunken, shifted copy with a wobble.
    let est: Vec<(f64, Vec3)> = gt
        .iter()
        .enumerate()
        .map(|(k, (t, p))| (*t, p * 0.4 + Vec3::new(2.0, 0.0, 0.01 * (k as f64).sin())))
        .collect();
    println!("ATE {:.5}", ate_rmse_sim3(&est, &gt)?);

    let a = RgbImage::filled(32, 24, [0.4, 0.4, 0.4]);
    let mut b = a.clone();
    for (k, p) in b.data.iter_mut().enumerate() {
        p[0] += if k % 2 == 0 { 0.1 } else { -0.1 };
    }
    println!("PSNR {}  SSIM {:.4}", psnr(&a, &b)?, ssim(&a, &b)?);

    let gt_depth = GrayImage::filled(8, 8, 2.0);
    let rendered = GrayImage::filled(8, 8, 0.5);
    let acc = GrayImage::filled(8, 8, 1.0);
    println!("depth L1 {:.3}", depth_l1_scale_aligned(&rendered, &gt_depth, &acc, DepthAlignment::MedianRatio)?);
    Ok(())
}
