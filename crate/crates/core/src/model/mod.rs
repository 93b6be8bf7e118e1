//! The colorization network `f(X; z)` and the sequence types it consumes.

mod arch;
pub mod checkpoint;
mod layers;
mod network;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::colorspace::{rgb_to_gray_with, GrayMode};
use crate::image::{GrayImage, RgbImage};
use crate::{Error, Result};

pub use arch::{Arch, LayerSpec};
pub use network::ModelState;

/// Ordered monochrome frames, all the same size.
#[derive(Clone, Debug, PartialEq)]
pub struct MonoSequence {
    frames: Vec<GrayImage>,
}

impl MonoSequence {
    pub fn new(frames: Vec<GrayImage>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("a sequence needs at least one frame".into()))?
            .dims();
        if let Some(bad) = frames.iter().find(|f| f.dims() != first) {
            return Err(Error::Shape {
                expected: first,
                found: bad.dims(),
            });
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// The colorized reference frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    image: RgbImage,
}

impl Reference {
    pub fn new(image: RgbImage) -> Self {
        Self { image }
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Ordered color frames, all the same size.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorSequence {
    frames: Vec<RgbImage>,
}

impl ColorSequence {
    pub fn new(frames: Vec<RgbImage>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("a sequence needs at least one frame".into()))?
            .dims();
        if let Some(bad) = frames.iter().find(|f| f.dims() != first) {
            return Err(Error::Shape {
                expected: first,
                found: bad.dims(),
            });
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<RgbImage> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn to_mono(&self, mode: GrayMode) -> MonoSequence {
        MonoSequence {
            frames: self.frames.iter().map(|f| rgb_to_gray_with(f, mode)).collect(),
        }
    }
}

/// One evaluation clip: ground truth, its monochrome version and the
/// reference (ground-truth frame 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub name: String,
    pub truth: ColorSequence,
    pub mono: MonoSequence,
    pub reference: Reference,
    pub source: Option<String>,
}

impl SequenceRecord {
    pub fn from_truth(name: impl Into<String>, truth: ColorSequence, mode: GrayMode) -> Self {
        let mono = truth.to_mono(mode);
        let reference = Reference::new(truth.frames()[0].clone());
        Self {
            name: name.into(),
            truth,
            mono,
            reference,
            source: None,
        }
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.truth.dims()
    }
}

/// Checks that a clip and its reference can be colorized together.
pub fn check_inputs(x: &MonoSequence, z: &Reference) -> Result<()> {
    if x.dims() != z.dims() {
        return Err(Error::Shape {
            expected: x.dims(),
            found: z.dims(),
        });
    }
    Ok(())
}

/// A named contiguous block of the parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub range: Range<usize>,
}

/// Result of a loss-and-gradient evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEval {
    /// Sum of the objective over the evaluated frames.
    pub loss: f64,
    /// d loss / d parameters, same layout as [`Colorizer::parameters`].
    pub gradient: Vec<f64>,
    /// RGB output for each evaluated frame, in request order.
    pub outputs: Vec<RgbImage>,
}

/// Per-frame objective: receives the frame index and the RGB prediction and
/// returns the loss and its gradient with respect to the prediction.
pub type Objective<'a> = dyn FnMut(usize, &RgbImage) -> Result<(f64, Vec<[f64; 3]>)> + 'a;

/// Anything the tuner can adapt: a reference-based colorizer with a flat,
/// differentiable parameter vector.
///
/// [`ModelState`] is the built-in implementation. An externally converted
/// network plugs into the tuner and the bench harness by implementing this
/// trait.
pub trait Colorizer: Clone {
    fn parameters(&self) -> &[f64];

    fn parameters_mut(&mut self) -> &mut [f64];

    fn layers(&self) -> Vec<LayerInfo>;

    fn forward(&self, x: &MonoSequence, z: &Reference) -> Result<ColorSequence>;

    /// Output for frame 1 only; must equal `forward(x, z)` frame 1 bitwise.
    fn forward_first(&self, x: &MonoSequence, z: &Reference) -> Result<RgbImage>;

    /// Evaluates `objective` on the requested frames and backpropagates to
    /// the parameters.
    fn gradient(
        &self,
        x: &MonoSequence,
        z: &Reference,
        frames: &[usize],
        objective: &mut Objective<'_>,
    ) -> Result<GradientEval>;
}

/// Resolves layer names to parameter ranges.
pub fn layer_mask<M: Colorizer>(model: &M, names: &[String]) -> Result<Vec<Range<usize>>> {
    let layers = model.layers();
    names
        .iter()
        .map(|n| {
            layers
                .iter()
                .find(|l| &l.name == n)
                .map(|l| l.range.clone())
                .ok_or_else(|| Error::Parameter(format!("unknown layer `{n}`")))
        })
        .collect()
}
