//! Supervised pretraining of a colorizer on ground-truth clips.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::{lab_to_srgb, srgb_to_lab, GrayMode, LabScale};
use crate::loss::{loss_and_grad, LossMode};
use crate::model::{ColorSequence, Colorizer, Reference, SequenceRecord};
use crate::optim::{Adam, AdamConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub loss_mode: LossMode,
    pub lab_scale: LabScale,
    /// Drives the clip order within each epoch and the recoloring.
    pub seed: u64,
    /// Fresh random variant of the clip at every step: the chroma plane is
    /// rotated (and maybe mirrored) so colors can only come from the
    /// reference, and frames are circularly shifted, flipped and transposed
    /// so the layouts cannot be memorized.
    pub augment: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            adam: AdamConfig::with_lr(3e-3),
            loss_mode: LossMode::LabCombined,
            lab_scale: LabScale::NORMALIZED,
            seed: 0,
            augment: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOutcome<M> {
    pub state: M,
    /// Mean per-frame loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// One Adam step per clip per epoch; each step averages the loss over every
/// frame of the clip.
pub fn pretrain<M: Colorizer>(
    init: &M,
    clips: &[SequenceRecord],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome<M>> {
    if clips.len() < 2 {
        return Err(Error::Parameter(format!(
            "pretraining needs at least 2 clips, got {}",
            clips.len()
        )));
    }
    let mut model = init.clone();
    let mut adam = Adam::new(cfg.adam, model.parameters().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &ci in &order {
            let recolored;
            let clip = if cfg.augment {
                let (h, w) = clips[ci].dims();
                let angle = rng.gen_range(0.0..core::f64::consts::TAU);
                let mirror = rng.gen_bool(0.5);
                let geometry = Geometry {
                    shift: (rng.gen_range(0..h), rng.gen_range(0..w)),
                    flip: rng.gen_bool(0.5),
                    transpose: h == w && rng.gen_bool(0.5),
                };
                recolored = recolor(&geometry.apply(&clips[ci])?, angle, mirror)?;
                &recolored
            } else {
                &clips[ci]
            };
            let targets: Vec<Reference> =
                clip.truth.frames().iter().cloned().map(Reference::new).collect();
            let frames: Vec<usize> = (0..clip.len()).collect();
            let weight = 1.0 / frames.len() as f64;
            let mut objective = |t: usize, y: &crate::RgbImage| {
                let (l, mut g) = loss_and_grad(cfg.loss_mode, y, &targets[t], cfg.lab_scale)?;
                g.iter_mut().flatten().for_each(|v| *v *= weight);
                Ok((l * weight, g))
            };
            let eval = model.gradient(&clip.mono, &clip.reference, &frames, &mut objective)?;
            if !eval.loss.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    loss: eval.loss,
                });
            }
            total += eval.loss;
            adam.step(model.parameters_mut(), &eval.gradient);
        }
        epoch_losses.push(total / clips.len() as f64);
    }
    Ok(PretrainOutcome {
        state: model,
        epoch_losses,
    })
}

/// Circular shift, then horizontal flip, then transpose (square frames only).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub shift: (usize, usize),
    pub flip: bool,
    pub transpose: bool,
}

impl Geometry {
    pub fn apply(&self, clip: &SequenceRecord) -> Result<SequenceRecord> {
        let (h, w) = clip.dims();
        if self.transpose && h != w {
            return Err(Error::Parameter(format!("cannot transpose {h}x{w} frames")));
        }
        let (sy, sx) = self.shift;
        let frames = clip
            .truth
            .frames()
            .iter()
            .map(|f| {
                let mut px = Vec::with_capacity(h * w);
                for y in 0..h {
                    for x in 0..w {
                        let (mut yy, mut xx) = if self.transpose { (x, y) } else { (y, x) };
                        if self.flip {
                            xx = w - 1 - xx;
                        }
                        yy = (yy + sy) % h;
                        xx = (xx + sx) % w;
                        px.push(f.get(yy, xx));
                    }
                }
                crate::RgbImage::new(w, h, px)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = SequenceRecord::from_truth(
            clip.name.clone(),
            ColorSequence::new(frames)?,
            GrayMode::Rec601,
        );
        out.source.clone_from(&clip.source);
        Ok(out)
    }
}

/// Rotates the (a, b) plane of every frame by `angle`, mirroring b first
/// when `mirror` is set; monochrome input and reference are rederived.
pub fn recolor(clip: &SequenceRecord, angle: f64, mirror: bool) -> Result<SequenceRecord> {
    let (sin, cos) = (libm::sin(angle), libm::cos(angle));
    let frames = clip
        .truth
        .frames()
        .iter()
        .map(|f| {
            f.map(|px| {
                let [l, a, b] = srgb_to_lab(px);
                let b = if mirror { -b } else { b };
                lab_to_srgb([l, cos * a - sin * b, sin * a + cos * b])
            })
        })
        .collect();
    let mut out = SequenceRecord::from_truth(
        clip.name.clone(),
        ColorSequence::new(frames)?,
        GrayMode::Rec601,
    );
    out.source.clone_from(&clip.source);
    Ok(out)
}
