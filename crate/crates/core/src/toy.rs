//! Procedural toy clips: flat-colored shapes translating over a static
//! textured background. Values are quantized to 8 bits so a clip survives a
//! PNG round trip unchanged.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::GrayMode;
use crate::image::RgbImage;
use crate::model::{ColorSequence, SequenceRecord};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Shape colors. Empty means one random color per shape.
    pub palette: Vec<[u8; 3]>,
    /// Translation speed in pixels per frame.
    pub motion: f64,
    pub shapes: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            height: 24,
            width: 24,
            frames: 6,
            palette: Vec::new(),
            motion: 1.5,
            shapes: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Rect { half_h: f64, half_w: f64 },
    Disc { radius: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    kind: Kind,
    y: f64,
    x: f64,
    vy: f64,
    vx: f64,
    color: [u8; 3],
}

fn hsv_to_rgb8(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h * 6.0;
    let sector = libm::floor(h6);
    let f = h6 - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(crate::image::quantize)
}

fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    hsv_to_rgb8(rng.gen(), rng.gen_range(0.6..1.0), rng.gen_range(0.55..1.0))
}

/// Signed distance on a ring of circumference `len`, in `[-len/2, len/2)`.
fn wrapped(d: f64, len: f64) -> f64 {
    let m = d - len * libm::floor(d / len);
    if m >= len / 2.0 {
        m - len
    } else {
        m
    }
}

struct Scene {
    spec: ToySpec,
    background: Vec<[u8; 3]>,
    shapes: Vec<Shape>,
}

impl Scene {
    fn new(spec: &ToySpec) -> Result<Self> {
        if spec.height < 16 || spec.width < 16 {
            return Err(Error::Parameter(format!(
                "toy clips need at least 16x16 pixels, got {}x{}",
                spec.height, spec.width
            )));
        }
        if spec.frames < 2 {
            return Err(Error::Parameter(format!(
                "toy clips need at least 2 frames, got {}",
                spec.frames
            )));
        }
        if !(spec.motion.is_finite() && spec.motion >= 0.0) {
            return Err(Error::Parameter(format!("invalid motion {}", spec.motion)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (h, w) = (spec.height, spec.width);

        let base = hsv_to_rgb8(rng.gen(), rng.gen_range(0.1..0.35), rng.gen_range(0.35..0.6));
        let (fy, fx) = (rng.gen_range(0.3..0.9), rng.gen_range(0.3..0.9));
        let (phase_a, phase_b) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
        let mut background = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (yf, xf) = (y as f64, x as f64);
                let t = 0.5 * (1.0 + libm::sin(fx * xf + phase_a) * libm::cos(fy * yf + phase_b));
                let gain = 0.7 + 0.6 * t;
                background.push(base.map(|c| crate::image::quantize(f64::from(c) / 255.0 * gain)));
            }
        }

        let short = h.min(w) as f64;
        let mut shapes = Vec::with_capacity(spec.shapes);
        for i in 0..spec.shapes {
            let color = if spec.palette.is_empty() {
                random_color(&mut rng)
            } else {
                spec.palette[i % spec.palette.len()]
            };
            let size = rng.gen_range(short / 5.0..short / 3.0);
            let kind = if rng.gen_bool(0.5) {
                Kind::Rect {
                    half_h: size / 2.0,
                    half_w: rng.gen_range(size / 3.0..size * 0.75),
                }
            } else {
                Kind::Disc { radius: size / 2.0 }
            };
            let angle: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
            shapes.push(Shape {
                kind,
                y: rng.gen_range(0.0..h as f64),
                x: rng.gen_range(0.0..w as f64),
                vy: spec.motion * libm::sin(angle),
                vx: spec.motion * libm::cos(angle),
                color,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            background,
            shapes,
        })
    }

    fn render(&self, t: usize) -> RgbImage {
        let (h, w) = (self.spec.height, self.spec.width);
        let mut bytes = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                let mut px = self.background[y * w + x];
                for s in &self.shapes {
                    let cy = s.y + s.vy * t as f64;
                    let cx = s.x + s.vx * t as f64;
                    let dy = wrapped(y as f64 + 0.5 - cy, h as f64);
                    let dx = wrapped(x as f64 + 0.5 - cx, w as f64);
                    let inside = match s.kind {
                        Kind::Rect { half_h, half_w } => dy.abs() <= half_h && dx.abs() <= half_w,
                        Kind::Disc { radius } => dy * dy + dx * dx <= radius * radius,
                    };
                    if inside {
                        px = s.color;
                    }
                }
                bytes.extend_from_slice(&px);
            }
        }
        RgbImage::from_rgb8(w, h, &bytes).expect("buffer matches dimensions")
    }
}

/// Generates a clip; the same spec always yields the same pixels.
pub fn make_toy_clip(spec: &ToySpec) -> Result<SequenceRecord> {
    let scene = Scene::new(spec)?;
    let frames = (0..spec.frames).map(|t| scene.render(t)).collect();
    let truth = ColorSequence::new(frames)?;
    Ok(SequenceRecord::from_truth(
        format!("toy-{}", spec.seed),
        truth,
        GrayMode::Rec601,
    ))
}

/// The static background of a clip, without shapes.
pub fn toy_background(spec: &ToySpec) -> Result<RgbImage> {
    let scene = Scene::new(spec)?;
    let (h, w) = (spec.height, spec.width);
    let bytes: Vec<u8> = scene.background.iter().flatten().copied().collect();
    RgbImage::from_rgb8(w, h, &bytes)
}
