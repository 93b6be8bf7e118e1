//! Pixel containers. All images are row-major; color images store one
//! `[f64; 3]` per pixel.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::InvalidInput(format!(
            "{width}x{height} image needs {} pixels, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// Normalized RGB image, nominal range `[0, 1]` per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Decodes interleaved 8-bit RGB, dividing by 255.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "expected {} bytes, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(3)
            .map(|p| {
                [
                    f64::from(p[0]) / 255.0,
                    f64::from(p[1]) / 255.0,
                    f64::from(p[2]) / 255.0,
                ]
            })
            .collect();
        Self::new(width, height, data)
    }

    /// Re-quantizes with `round(v * 255)` clamped to `[0, 255]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|p| p.iter().map(|&v| quantize(v)))
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Quantizes a normalized channel value to 8 bits.
pub fn quantize(v: f64) -> u8 {
    let q = libm::round(v * 255.0);
    if q.is_nan() {
        0
    } else {
        q.clamp(0.0, 255.0) as u8
    }
}

/// Single-channel image in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Replicates the gray value into all three channels.
    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }
}

/// CIE L*a*b* image: `[L, a, b]` per pixel with L in `[0, 100]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Reassembles an image from a luminance plane and the two chroma planes.
    pub fn from_planes(luminance: &Plane, chroma: &[Plane; 2]) -> Result<Self> {
        let dims = luminance.dims();
        for p in chroma {
            if p.dims() != dims {
                return Err(Error::Shape {
                    expected: dims,
                    found: p.dims(),
                });
            }
        }
        let data = luminance
            .values()
            .iter()
            .zip(chroma[0].values())
            .zip(chroma[1].values())
            .map(|((&l, &a), &b)| [l, a, b])
            .collect();
        Self::new(luminance.width(), luminance.height(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }
}

/// A single real-valued plane, used for the luminance / chrominance split.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
