//! PSNR and SSIM.
//!
//! Conventions: PSNR uses one MSE over all pixels and all three RGB channels
//! with a peak of 1.0. SSIM uses an 11x11 Gaussian window (sigma 1.5),
//! K1 = 0.01, K2 = 0.03, is evaluated only where the window lies fully inside
//! the image, and is averaged over the three RGB channels.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::RgbImage;
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Human-readable description of the metric conventions, written into every
/// report header.
pub const CONVENTIONS: &str = "psnr=rgb-joint-mse peak=1.0; ssim=gaussian11 sigma=1.5 k1=0.01 k2=0.03 valid-mode rgb-channel-mean";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricPair {
    pub psnr: f64,
    pub ssim: f64,
}

fn check_shape(pred: &RgbImage, truth: &RgbImage) -> Result<()> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape {
            expected: truth.dims(),
            found: pred.dims(),
        });
    }
    Ok(())
}

pub fn mse(pred: &RgbImage, truth: &RgbImage) -> Result<f64> {
    check_shape(pred, truth)?;
    let sum: f64 = pred
        .pixels()
        .iter()
        .zip(truth.pixels())
        .flat_map(|(p, t)| (0..3).map(move |c| (p[c] - t[c]) * (p[c] - t[c])))
        .sum();
    Ok(sum / (3 * pred.len()) as f64)
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images.
pub fn psnr(pred: &RgbImage, truth: &RgbImage) -> Result<f64> {
    let err = mse(pred, truth)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(1.0 / err))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filtering of a `w x h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> f64 {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, k);
    let mu_b = filter_valid(b, w, h, k);
    let s_aa = filter_valid(&aa, w, h, k);
    let s_bb = filter_valid(&bb, w, h, k);
    let s_ab = filter_valid(&ab, w, h, k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = s_aa[i] - ma * ma;
        let vb = s_bb[i] - mb * mb;
        let cov = s_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean structural similarity, averaged over RGB channels.
pub fn ssim(pred: &RgbImage, truth: &RgbImage) -> Result<f64> {
    check_shape(pred, truth)?;
    let (h, w) = pred.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall {
            found: (h, w),
            window: SSIM_WINDOW,
        });
    }
    let k = gaussian_kernel();
    let mut total = 0.0;
    for c in 0..3 {
        let a: Vec<f64> = pred.pixels().iter().map(|p| p[c]).collect();
        let b: Vec<f64> = truth.pixels().iter().map(|p| p[c]).collect();
        total += ssim_channel(&a, &b, w, h, &k);
    }
    Ok(total / 3.0)
}

pub fn metric_pair(pred: &RgbImage, truth: &RgbImage) -> Result<MetricPair> {
    Ok(MetricPair {
        psnr: psnr(pred, truth)?,
        ssim: ssim(pred, truth)?,
    })
}

/// Sequence-level metrics: means over frames 2..T and over 1..T.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceMetrics {
    /// `None` when the sequence has a single frame.
    pub excluding_reference: Option<MetricPair>,
    pub all_frames: MetricPair,
}

pub fn sequence_metrics(pred: &[RgbImage], truth: &[RgbImage]) -> Result<SequenceMetrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::InvalidInput(alloc::format!(
            "sequence lengths {} and {} must match and be non-empty",
            pred.len(),
            truth.len()
        )));
    }
    let per_frame = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| metric_pair(p, t))
        .collect::<Result<Vec<_>>>()?;
    let mean = |frames: &[MetricPair]| MetricPair {
        psnr: frames.iter().map(|m| m.psnr).sum::<f64>() / frames.len() as f64,
        ssim: frames.iter().map(|m| m.ssim).sum::<f64>() / frames.len() as f64,
    };
    Ok(SequenceMetrics {
        excluding_reference: (per_frame.len() > 1).then(|| mean(&per_frame[1..])),
        all_frames: mean(&per_frame),
    })
}
