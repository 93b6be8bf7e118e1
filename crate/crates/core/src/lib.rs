//! Core numerics for reference-based video colorization with test-time tuning.
//!
//! A monochrome clip plus one colorized reference frame goes through a compact
//! encoder / correspondence / decoder network. Before the full clip is
//! colorized, the network parameters are fine-tuned on the reference frame
//! itself: the grayscale version of the reference is the input, the reference
//! is the target, and the objective is a squared error split into a LAB
//! luminance term and a LAB chrominance term.
//!
//! This crate is `no_std` (with `alloc`). Everything that touches the file
//! system, the wall clock or the command line lives in the `refcolor` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod colorspace;
mod error;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod toy;
pub mod train;
pub mod tuner;

pub use error::{Error, Result};
pub use image::{GrayImage, LabImage, Plane, RgbImage};
pub use model::{
    Arch, ColorSequence, Colorizer, GradientEval, LayerInfo, ModelState, MonoSequence, Reference,
    SequenceRecord,
};
pub use tuner::{Clock, LossMode, NoClock, TuningConfig, TuningReport};
