//! Test-time tuning on the reference / monochrome pair.
//!
//! The clip's first monochrome frame goes through the network with the
//! reference attached, exactly as at inference time, and the first predicted
//! frame is pulled toward the reference. Every iteration is one full-image
//! gradient step; Adam moments start from zero for every clip.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::colorspace::LabScale;
use crate::loss::{loss, loss_and_grad};
use crate::metrics::psnr;
use crate::model::{layer_mask, ColorSequence, Colorizer, ModelState, MonoSequence, Reference};
use crate::optim::{Adam, AdamConfig};
use crate::{Error, Result};

pub use crate::loss::LossMode;

/// Source of elapsed seconds. The core crate has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Always reports zero, for callers that do not need timing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

pub const DEFAULT_ITERATIONS: usize = 20;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
/// Abort when the loss grows beyond this multiple of its starting value.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct TuningConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    pub loss_mode: LossMode,
    pub lab_scale: LabScale,
    /// Recorded in reports. Full-batch tuning consumes no randomness, so two
    /// runs that differ only in the seed produce the same parameters.
    pub seed: u64,
    /// Layers whose parameters stay fixed. Empty means everything is tuned.
    pub frozen_layers: Vec<String>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            adam: AdamConfig::with_lr(DEFAULT_LEARNING_RATE),
            loss_mode: LossMode::LabCombined,
            lab_scale: LabScale::NORMALIZED,
            seed: 0,
            frozen_layers: Vec::new(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.adam.learning_rate;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {lr}")));
        }
        if !(self.lab_scale.l > 0.0 && self.lab_scale.ab > 0.0) {
            return Err(Error::Parameter("LAB scale factors must be positive".into()));
        }
        Ok(())
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_loss(mut self, mode: LossMode) -> Self {
        self.loss_mode = mode;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningReport<M = ModelState> {
    /// Loss before each step; index 0 is the untuned model, so
    /// `len() == iterations + 1`.
    pub loss_trace: Vec<f64>,
    /// First-frame PSNR against the reference, aligned with `loss_trace`.
    pub psnr_trace: Vec<f64>,
    /// Seconds spent in the optimization loop.
    pub wall_time: f64,
    pub final_state: M,
}

impl<M: Colorizer> TuningReport<M> {
    pub fn iterations(&self) -> usize {
        self.loss_trace.len() - 1
    }

    /// Equality ignoring wall time: traces and final parameters bitwise.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.loss_trace) == bits(&other.loss_trace)
            && bits(&self.psnr_trace) == bits(&other.psnr_trace)
            && bits(self.final_state.parameters()) == bits(other.final_state.parameters())
    }
}

fn zero_frozen(grad: &mut [f64], frozen: &[Range<usize>]) {
    for r in frozen {
        grad[r.clone()].iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Fine-tunes a copy of `state` on `(x[0], z)`. The input state is not touched.
pub fn tune<M: Colorizer>(
    state: &M,
    x: &MonoSequence,
    z: &Reference,
    cfg: &TuningConfig,
    clock: &dyn Clock,
) -> Result<TuningReport<M>> {
    tune_observed(state, x, z, cfg, clock, &mut |_, _| Ok(()))
}

/// [`tune`], calling `observe(i, model)` with the parameters after `i` steps
/// for every `i` in `0..iterations` and once more after the last step.
/// Observer calls made during the loop count toward wall time.
pub fn tune_observed<M: Colorizer>(
    state: &M,
    x: &MonoSequence,
    z: &Reference,
    cfg: &TuningConfig,
    clock: &dyn Clock,
    observe: &mut dyn FnMut(usize, &M) -> Result<()>,
) -> Result<TuningReport<M>> {
    cfg.validate()?;
    let frozen = layer_mask(state, &cfg.frozen_layers)?;
    let mut model = state.clone();
    let mut adam = Adam::new(cfg.adam, model.parameters().len());
    let mut loss_trace = Vec::with_capacity(cfg.iterations + 1);
    let mut psnr_trace = Vec::with_capacity(cfg.iterations + 1);
    let mode = cfg.loss_mode;
    let scale = cfg.lab_scale;
    let start = clock.now();

    let mut initial = None;
    let mut record = |iteration: usize, value: f64, y1_psnr: f64| -> Result<()> {
        let first = *initial.get_or_insert(value);
        if !value.is_finite() || (first > 0.0 && value > DIVERGENCE_FACTOR * first) {
            return Err(Error::Divergence {
                iteration,
                loss: value,
            });
        }
        loss_trace.push(value);
        psnr_trace.push(y1_psnr);
        Ok(())
    };

    for iteration in 0..cfg.iterations {
        observe(iteration, &model)?;
        let mut objective = |_t: usize, y1: &crate::RgbImage| loss_and_grad(mode, y1, z, scale);
        let eval = model.gradient(x, z, &[0], &mut objective)?;
        record(iteration, eval.loss, psnr(&eval.outputs[0], z.image())?)?;
        let mut grad = eval.gradient;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                loss: eval.loss,
            });
        }
        zero_frozen(&mut grad, &frozen);
        adam.step(model.parameters_mut(), &grad);
    }
    // The closing trace entry is inference, not optimization: stop the clock.
    let wall_time = (clock.now() - start).max(0.0);
    observe(cfg.iterations, &model)?;
    let y1 = model.forward_first(x, z)?;
    record(cfg.iterations, loss(mode, &y1, z, scale)?, psnr(&y1, z.image())?)?;

    Ok(TuningReport {
        loss_trace,
        psnr_trace,
        wall_time,
        final_state: model,
    })
}

/// Tunes, then colorizes the whole clip with the tuned parameters.
pub fn colorize_tuned<M: Colorizer>(
    state: &M,
    x: &MonoSequence,
    z: &Reference,
    cfg: &TuningConfig,
    clock: &dyn Clock,
) -> Result<(ColorSequence, TuningReport<M>)> {
    let report = tune(state, x, z, cfg, clock)?;
    let out = report.final_state.forward(x, z)?;
    Ok((out, report))
}
