//! Trajectory and rendering metrics.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{umeyama_sim3, Sim3, Vec3};
use crate::raster::{check_shape, GrayImage, RgbImage};

/// Timestamps closer than this are associated.
pub const ASSOCIATION_TOLERANCE: f64 = 0.01;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// `(timestamp, position)` samples.
pub type PositionTrack = [(f64, Vec3)];

/// Pairs every estimate sample with the nearest ground-truth sample in time.
pub fn associate(estimate: &PositionTrack, gt: &PositionTrack) -> Vec<(Vec3, Vec3)> {
    let mut out = Vec::new();
    for (t, p) in estimate {
        let nearest = gt
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()));
        if let Some((tg, g)) = nearest {
            if (tg - t).abs() <= ASSOCIATION_TOLERANCE {
                out.push((*p, *g));
            }
        }
    }
    out
}

fn rmse(pairs: &[(Vec3, Vec3)], alignment: &Sim3) -> f64 {
    let sum: f64 = pairs
        .iter()
        .map(|(e, g)| (alignment.act(e) - g).norm_squared())
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

/// RMSE of translations after applying a fixed alignment to the estimate.
pub fn ate_rmse_with(estimate: &PositionTrack, gt: &PositionTrack, alignment: &Sim3) -> Result<f64> {
    let pairs = associate(estimate, gt);
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "ATE needs at least 3 associated poses, got {}",
            pairs.len()
        )));
    }
    Ok(rmse(&pairs, alignment))
}

/// Best Sim(3) alignment of the estimate onto ground truth.
pub fn align_sim3(estimate: &PositionTrack, gt: &PositionTrack) -> Result<Sim3> {
    let pairs = associate(estimate, gt);
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "ATE needs at least 3 associated poses, got {}",
            pairs.len()
        )));
    }
    let (src, dst): (Vec<Vec3>, Vec<Vec3>) = pairs.into_iter().unzip();
    umeyama_sim3(&src, &dst)
}

/// Absolute trajectory error after Sim(3) alignment.
pub fn ate_rmse_sim3(estimate: &PositionTrack, gt: &PositionTrack) -> Result<f64> {
    let alignment = align_sim3(estimate, gt)?;
    ate_rmse_with(estimate, gt, &alignment)
}

/// Peak signal-to-noise ratio, with identical images flagged instead of infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Exact,
    Db(f64),
}

impl Psnr {
    pub fn is_exact(&self) -> bool {
        matches!(self, Psnr::Exact)
    }

    /// Decibels, or `None` for an exact match.
    pub fn db(&self) -> Option<f64> {
        match self {
            Psnr::Exact => None,
            Psnr::Db(v) => Some(*v),
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Exact => f.write_str("exact"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

pub fn mse(rendered: &RgbImage, target: &RgbImage) -> Result<f64> {
    check_shape(rendered, target)?;
    let mut sum = 0.0;
    for (a, b) in rendered.data.iter().zip(&target.data) {
        for k in 0..3 {
            sum += (a[k] - b[k]) * (a[k] - b[k]);
        }
    }
    Ok(sum / (3 * rendered.data.len()) as f64)
}

/// `10 log10(1 / MSE)` over all channels.
pub fn psnr(rendered: &RgbImage, target: &RgbImage) -> Result<Psnr> {
    let m = mse(rendered, target)?;
    Ok(if m == 0.0 {
        Psnr::Exact
    } else {
        Psnr::Db(10.0 * (1.0 / m).log10())
    })
}

/// Mean over the non-exact views; exact only when every view is.
pub fn mean_psnr(values: &[Psnr]) -> Option<Psnr> {
    if values.is_empty() {
        return None;
    }
    if values.iter().all(Psnr::is_exact) {
        return Some(Psnr::Exact);
    }
    let finite: Vec<f64> = values.iter().filter_map(Psnr::db).collect();
    Some(Psnr::Db(finite.iter().sum::<f64>() / finite.len() as f64))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

fn ssim_channel(a: &[f64], b: &[f64], width: usize, height: usize, g: &[f64]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0;
    for y0 in 0..=height - SSIM_WINDOW {
        for x0 in 0..=width - SSIM_WINDOW {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dy, gy) in g.iter().enumerate() {
                for (dx, gx) in g.iter().enumerate() {
                    let w = gy * gx;
                    let idx = (y0 + dy) * width + x0 + dx;
                    let (va, vb) = (a[idx], b[idx]);
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            }
            let (var_a, var_b, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
            count += 1;
        }
    }
    (sum, count)
}

/// Mean structural similarity over all valid 11x11 Gaussian windows and channels.
pub fn ssim(rendered: &RgbImage, target: &RgbImage) -> Result<f64> {
    check_shape(rendered, target)?;
    let (w, h) = (rendered.width, rendered.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::DimensionMismatch {
            expected: format!("at least {SSIM_WINDOW}x{SSIM_WINDOW}"),
            got: format!("{w}x{h}"),
        });
    }
    let g = gaussian_window();
    let (mut sum, mut count) = (0.0, 0);
    for k in 0..3 {
        let a: Vec<f64> = rendered.data.iter().map(|p| p[k]).collect();
        let b: Vec<f64> = target.data.iter().map(|p| p[k]).collect();
        let (s, c) = ssim_channel(&a, &b, w, h, &g);
        sum += s;
        count += c;
    }
    Ok(sum / count as f64)
}

/// How rendered depth is scaled onto ground truth before the L1 error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DepthAlignment {
    #[default]
    MedianRatio,
    LeastSquares,
}

impl DepthAlignment {
    pub fn as_str(&self) -> &'static str {
        match self {
            DepthAlignment::MedianRatio => "median_ratio",
            DepthAlignment::LeastSquares => "least_squares",
        }
    }
}

impl std::str::FromStr for DepthAlignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median_ratio" => Ok(DepthAlignment::MedianRatio),
            "least_squares" => Ok(DepthAlignment::LeastSquares),
            other => Err(Error::Config(format!("unknown depth alignment {other:?}"))),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean absolute depth error over pixels with `gt > 0`, `accumulation > 0.5`
/// and a positive rendered depth, after scale alignment.
pub fn depth_l1_scale_aligned(
    rendered: &GrayImage,
    gt: &GrayImage,
    accumulation: &GrayImage,
    alignment: DepthAlignment,
) -> Result<f64> {
    check_shape(rendered, gt)?;
    check_shape(rendered, accumulation)?;
    let pairs: Vec<(f64, f64)> = rendered
        .data
        .iter()
        .zip(&gt.data)
        .zip(&accumulation.data)
        .filter(|((r, g), a)| **g > 0.0 && **a > 0.5 && **r > 0.0)
        .map(|((r, g), _)| (*r, *g))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData("depth L1 mask is empty".into()));
    }
    let scale = match alignment {
        DepthAlignment::MedianRatio => median(pairs.iter().map(|(r, g)| g / r).collect()),
        DepthAlignment::LeastSquares => {
            let num: f64 = pairs.iter().map(|(r, g)| r * g).sum();
            let den: f64 = pairs.iter().map(|(r, _)| r * r).sum();
            num / den
        }
    };
    Ok(pairs.iter().map(|(r, g)| (scale * r - g).abs()).sum::<f64>() / pairs.len() as f64)
}
