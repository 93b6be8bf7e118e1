//! Architecture descriptor for the stand-in colorization network.
//!
//! ```text
//! target window (W_t gray frames) -> enc1 -> enc2 --------------+--> dec1 -> dec2 -> head -> LAB
//!                                          \-> query -\          |
//! reference gray -> ref1 -> ref2 -> pool -+-> key ----> attend --+
//!                                         +-> value -/   (also carries the
//! reference (a, b) -> pool -------------------------/    reference chroma)
//! ```
//!
//! The decoder also receives the center gray frame directly.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arch {
    /// Temporal window length, odd.
    pub window: usize,
    pub enc_channels: usize,
    pub ref_channels: usize,
    pub attn_dim: usize,
    pub value_dim: usize,
    pub dec_channels: usize,
    /// Average-pooling factor applied to reference features before attention.
    pub ref_stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub inputs: usize,
    pub outputs: usize,
    pub kernel: usize,
}

impl LayerSpec {
    pub fn weight_count(&self) -> usize {
        self.inputs * self.outputs * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.outputs
    }

    pub fn fan_in(&self) -> usize {
        self.inputs * self.kernel * self.kernel
    }
}

/// Number of chroma channels carried through the attention values.
pub(crate) const CHROMA: usize = 2;

pub(crate) const ENC1: usize = 0;
pub(crate) const ENC2: usize = 1;
pub(crate) const REF1: usize = 2;
pub(crate) const REF2: usize = 3;
pub(crate) const QUERY: usize = 4;
pub(crate) const KEY: usize = 5;
pub(crate) const VALUE: usize = 6;
pub(crate) const DEC1: usize = 7;
pub(crate) const DEC2: usize = 8;
pub(crate) const HEAD: usize = 9;

impl Arch {
    /// Default architecture for real footage (about 100k parameters).
    pub const STANDARD: Self = Self {
        window: 5,
        enc_channels: 32,
        ref_channels: 32,
        attn_dim: 16,
        value_dim: 16,
        dec_channels: 72,
        ref_stride: 4,
    };

    /// Small architecture used by the toy recipe and the gradient checks
    /// (under 10k parameters).
    pub const TOY: Self = Self {
        window: 5,
        enc_channels: 12,
        ref_channels: 12,
        attn_dim: 8,
        value_dim: 4,
        dec_channels: 16,
        ref_stride: 1,
    };

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.window,
            self.enc_channels,
            self.ref_channels,
            self.attn_dim,
            self.value_dim,
            self.dec_channels,
            self.ref_stride,
        ];
        if dims.contains(&0) {
            return Err(Error::Parameter(format!("architecture has a zero dimension: {self:?}")));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::Parameter(format!("window must be odd, got {}", self.window)));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let l = |name, inputs, outputs, kernel| LayerSpec {
            name,
            inputs,
            outputs,
            kernel,
        };
        let c = self.enc_channels;
        let r = self.ref_channels;
        let transported = CHROMA + self.value_dim;
        alloc::vec![
            l("enc1", self.window, c, 3),
            l("enc2", c, c, 3),
            l("ref1", 1, r, 3),
            l("ref2", r, r, 3),
            l("query", c, self.attn_dim, 1),
            l("key", r, self.attn_dim, 1),
            l("value", r, self.value_dim, 1),
            l("dec1", c + 1 + transported, self.dec_channels, 3),
            l("dec2", self.dec_channels, self.dec_channels, 3),
            l("head", self.dec_channels, 3, 1),
        ]
    }

    /// Start offset of every layer in the flat parameter vector, plus the total.
    pub fn offsets(&self) -> (Vec<usize>, usize) {
        let mut offsets = Vec::new();
        let mut total = 0;
        for layer in self.layers() {
            offsets.push(total);
            total += layer.param_count();
        }
        (offsets, total)
    }

    pub fn param_count(&self) -> usize {
        self.offsets().1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_budgets() {
        let standard = Arch::STANDARD.param_count();
        assert!((100_000..=500_000).contains(&standard), "{standard}");
        assert!(Arch::TOY.param_count() <= 10_000, "{}", Arch::TOY.param_count());
    }

    #[test]
    fn rejects_even_window() {
        let arch = Arch {
            window: 4,
            ..Arch::TOY
        };
        assert!(arch.validate().is_err());
        assert!(Arch::TOY.validate().is_ok());
    }
}
