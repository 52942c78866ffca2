use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::raster::{GrayImage, RgbImage};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Rounds `[0, 1]` colors to 8 bits.
pub fn quantize_rgb(img: &RgbImage) -> RgbImage {
    RgbImage {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0))
            .collect(),
    }
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    let buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::from_fn(img.width as u32, img.height as u32, |x, y| {
        let c = img.get(x as usize, y as usize);
        Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage {
        width: w as usize,
        height: h as usize,
        data: img.pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect(),
    })
}

/// 16-bit depth: `round(depth * depth_scale)`, saturating; 0 marks no depth.
pub fn write_depth_png(path: &Path, depth: &GrayImage, depth_scale: f64) -> Result<()> {
    let buf = ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(depth.width as u32, depth.height as u32, |x, y| {
        let d = depth.get(x as usize, y as usize);
        Luma([(d * depth_scale).round().clamp(0.0, u16::MAX as f64) as u16])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    Ok(GrayImage {
        width: w as usize,
        height: h as usize,
        data: img.pixels().map(|p| p.0[0] as f64 / depth_scale).collect(),
    })
}
