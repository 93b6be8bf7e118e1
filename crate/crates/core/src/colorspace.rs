//! sRGB / CIE L*a*b* conversions (D65) with analytic Jacobians, Rec. 601
//! grayscale, and the luminance / chrominance split used by the losses.

use alloc::format;
use alloc::vec::Vec;

use crate::image::{GrayImage, LabImage, Plane, RgbImage};
use crate::{Error, Result};

/// Linear sRGB to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404548360214087, -1.5371388501025751, -0.498531546868481],
    [-0.9692663898756538, 1.876010928842491, 0.04155608234667355],
    [0.05564341960421367, -0.20402585426769818, 1.057225162457929],
];

// 6/29
const DELTA: f64 = 6.0 / 29.0;
const DELTA_SQ: f64 = DELTA * DELTA;
const DELTA_CUBE: f64 = DELTA * DELTA * DELTA;

/// Rec. 601 luma weights.
pub const REC601: [f64; 3] = [0.299, 0.587, 0.114];

/// Reference white, taken as the image of RGB (1, 1, 1) so that white maps to
/// exactly L = 100, a = b = 0.
fn white() -> [f64; 3] {
    let m = &RGB_TO_XYZ;
    [
        m[0][0] + m[0][1] + m[0][2],
        m[1][0] + m[1][1] + m[1][2],
        m[2][0] + m[2][1] + m[2][2],
    ]
}

/// How the monochrome input is derived from a color frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GrayMode {
    /// `0.299 R + 0.587 G + 0.114 B` on the encoded values.
    #[default]
    Rec601,
    /// CIE L* divided by 100.
    Lightness,
}

impl GrayMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rec601 => "rec601",
            Self::Lightness => "lightness",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rec601" => Some(Self::Rec601),
            "lightness" => Some(Self::Lightness),
            _ => None,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::Rec601 => "gray=0.299R+0.587G+0.114B",
            Self::Lightness => "gray=L*/100",
        }
    }
}

/// Divisors applied to L and to (a, b) before the losses see them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabScale {
    pub l: f64,
    pub ab: f64,
}

impl LabScale {
    pub const NORMALIZED: Self = Self { l: 100.0, ab: 128.0 };
    pub const RAW: Self = Self { l: 1.0, ab: 1.0 };
}

impl Default for LabScale {
    fn default() -> Self {
        Self::NORMALIZED
    }
}

#[inline]
fn srgb_to_linear(c: f64) -> (f64, f64) {
    if c <= 0.04045 {
        (c / 12.92, 1.0 / 12.92)
    } else {
        let base = (c + 0.055) / 1.055;
        (libm::pow(base, 2.4), 2.4 / 1.055 * libm::pow(base, 1.4))
    }
}

#[inline]
fn linear_to_srgb(l: f64) -> (f64, f64) {
    if l <= 0.0031308 {
        (12.92 * l, 12.92)
    } else {
        let p = libm::pow(l, 1.0 / 2.4);
        (1.055 * p - 0.055, 1.055 / 2.4 * p / l)
    }
}

#[inline]
fn lab_f(t: f64) -> (f64, f64) {
    if t > DELTA_CUBE {
        let c = libm::cbrt(t);
        (c, 1.0 / (3.0 * c * c))
    } else {
        (t / (3.0 * DELTA_SQ) + 4.0 / 29.0, 1.0 / (3.0 * DELTA_SQ))
    }
}

#[inline]
fn lab_f_inv(t: f64) -> (f64, f64) {
    if t > DELTA {
        (t * t * t, 3.0 * t * t)
    } else {
        (3.0 * DELTA_SQ * (t - 4.0 / 29.0), 3.0 * DELTA_SQ)
    }
}

/// Converts one normalized sRGB pixel to `[L, a, b]`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    srgb_to_lab_jacobian(rgb).0
}

/// `[L, a, b]` together with `d(L, a, b) / d(r, g, b)` (row = output).
pub fn srgb_to_lab_jacobian(rgb: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let w = white();
    let mut lin = [0.0; 3];
    let mut dlin = [0.0; 3];
    for c in 0..3 {
        (lin[c], dlin[c]) = srgb_to_linear(rgb[c]);
    }
    let mut f = [0.0; 3];
    let mut df = [0.0; 3];
    // d f_i / d rgb_j
    let mut jf = [[0.0; 3]; 3];
    for i in 0..3 {
        let m = &RGB_TO_XYZ[i];
        let t = (m[0] * lin[0] + m[1] * lin[1] + m[2] * lin[2]) / w[i];
        (f[i], df[i]) = lab_f(t);
        for j in 0..3 {
            jf[i][j] = df[i] * m[j] / w[i] * dlin[j];
        }
    }
    let lab = [
        116.0 * f[1] - 16.0,
        500.0 * (f[0] - f[1]),
        200.0 * (f[1] - f[2]),
    ];
    let mut jac = [[0.0; 3]; 3];
    for j in 0..3 {
        jac[0][j] = 116.0 * jf[1][j];
        jac[1][j] = 500.0 * (jf[0][j] - jf[1][j]);
        jac[2][j] = 200.0 * (jf[1][j] - jf[2][j]);
    }
    (lab, jac)
}

/// Converts `[L, a, b]` back to normalized sRGB, clamped to `[0, 1]`.
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    lab_to_srgb_jacobian(lab).0
}

/// Clamped sRGB together with `d(r, g, b) / d(L, a, b)`. Channels that hit the
/// clamp have a zero Jacobian row.
pub fn lab_to_srgb_jacobian(lab: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let w = white();
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    // d(fx, fy, fz) / d(L, a, b)
    let jfl = [
        [1.0 / 116.0, 1.0 / 500.0, 0.0],
        [1.0 / 116.0, 0.0, 0.0],
        [1.0 / 116.0, 0.0, -1.0 / 200.0],
    ];
    let mut xyz = [0.0; 3];
    let mut jxyz = [[0.0; 3]; 3];
    for (i, &ft) in [fx, fy, fz].iter().enumerate() {
        let (v, d) = lab_f_inv(ft);
        xyz[i] = w[i] * v;
        for j in 0..3 {
            jxyz[i][j] = w[i] * d * jfl[i][j];
        }
    }
    let mut rgb = [0.0; 3];
    let mut jac = [[0.0; 3]; 3];
    for c in 0..3 {
        let m = &XYZ_TO_RGB[c];
        let lin = m[0] * xyz[0] + m[1] * xyz[1] + m[2] * xyz[2];
        if lin <= 0.0 {
            rgb[c] = 0.0;
            continue;
        }
        if lin >= 1.0 {
            rgb[c] = 1.0;
            continue;
        }
        let (v, d) = linear_to_srgb(lin);
        rgb[c] = v.clamp(0.0, 1.0);
        for j in 0..3 {
            jac[c][j] = d * (m[0] * jxyz[0][j] + m[1] * jxyz[1][j] + m[2] * jxyz[2][j]);
        }
    }
    (rgb, jac)
}

fn ensure_finite(pixels: &[[f64; 3]]) -> Result<()> {
    match pixels.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        Some(i) => Err(Error::InvalidInput(format!("non-finite value at pixel {i}"))),
        None => Ok(()),
    }
}

pub fn rgb_to_lab(img: &RgbImage) -> Result<LabImage> {
    ensure_finite(img.pixels())?;
    let data = img.pixels().iter().map(|&p| srgb_to_lab(p)).collect();
    LabImage::new(img.width(), img.height(), data)
}

pub fn lab_to_rgb(img: &LabImage) -> Result<RgbImage> {
    ensure_finite(img.pixels())?;
    let data = img.pixels().iter().map(|&p| lab_to_srgb(p)).collect();
    RgbImage::new(img.width(), img.height(), data)
}

/// Pulls a gradient with respect to LAB values back to sRGB values.
pub fn rgb_to_lab_vjp(img: &RgbImage, grad_lab: &[[f64; 3]]) -> Vec<[f64; 3]> {
    img.pixels()
        .iter()
        .zip(grad_lab)
        .map(|(&p, g)| {
            let (_, j) = srgb_to_lab_jacobian(p);
            transpose_mul(&j, g)
        })
        .collect()
}

/// Pulls a gradient with respect to sRGB values back to LAB values.
pub fn lab_to_rgb_vjp(lab: &[[f64; 3]], grad_rgb: &[[f64; 3]]) -> Vec<[f64; 3]> {
    lab.iter()
        .zip(grad_rgb)
        .map(|(&p, g)| {
            let (_, j) = lab_to_srgb_jacobian(p);
            transpose_mul(&j, g)
        })
        .collect()
}

#[inline]
fn transpose_mul(j: &[[f64; 3]; 3], g: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (r, row) in j.iter().enumerate() {
        for c in 0..3 {
            out[c] += row[c] * g[r];
        }
    }
    out
}

/// Luminance plane and the stacked chrominance planes. Both are owned copies.
pub fn split_lab(img: &LabImage) -> (Plane, [Plane; 2]) {
    let (w, h) = (img.width(), img.height());
    let plane = |c: usize| {
        Plane::new(w, h, img.pixels().iter().map(|p| p[c]).collect())
            .expect("dimensions come from a valid image")
    };
    (plane(0), [plane(1), plane(2)])
}

pub fn rgb_to_gray(img: &RgbImage) -> GrayImage {
    rgb_to_gray_with(img, GrayMode::Rec601)
}

pub fn rgb_to_gray_with(img: &RgbImage, mode: GrayMode) -> GrayImage {
    let data = img
        .pixels()
        .iter()
        .map(|&p| match mode {
            GrayMode::Rec601 => REC601[0] * p[0] + REC601[1] * p[1] + REC601[2] * p[2],
            GrayMode::Lightness => srgb_to_lab(p)[0] / 100.0,
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("dimensions come from a valid image")
}
