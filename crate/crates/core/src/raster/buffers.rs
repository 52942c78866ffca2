use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

/// Row-major single-channel image (depth, accumulation).
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn same_shape<T: Shape>(&self, other: &T) -> Result<()> {
        check_shape(self, other)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

pub trait Shape {
    fn dims(&self) -> (usize, usize);
}

impl Shape for RgbImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Shape for GrayImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub fn check_shape<A: Shape, B: Shape>(a: &A, b: &B) -> Result<()> {
    let (da, db) = (a.dims(), b.dims());
    if da == db {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: format!("{}x{}", da.0, da.1),
            got: format!("{}x{}", db.0, db.1),
        })
    }
}

/// Color, depth and accumulation produced by alpha blending.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBuffers {
    pub color: RgbImage,
    pub depth: GrayImage,
    pub accumulation: GrayImage,
}

impl RenderBuffers {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            color: RgbImage::new(width, height),
            depth: GrayImage::new(width, height),
            accumulation: GrayImage::new(width, height),
        }
    }

    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }

    /// Expected depth normalized by accumulation, 0 where nothing was hit.
    pub fn normalized_depth(&self, min_accumulation: f64) -> GrayImage {
        let mut out = GrayImage::new(self.width(), self.height());
        for (o, (d, a)) in out
            .data
            .iter_mut()
            .zip(self.depth.data.iter().zip(&self.accumulation.data))
        {
            if *a > min_accumulation {
                *o = d / a;
            }
        }
        out
    }
}
