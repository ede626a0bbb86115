//! Generator and discriminator networks.
//!
//! Both streams of the generator are pix2pix-style UNets: 4×4 stride-2
//! convolutions down, transposed convolutions up, skip connections within a
//! stream. Stream outputs meet just before the last upsampling layer, where a
//! 1×1 convolution fuses them ahead of one shared output head.

mod disc;
mod unet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use disc::{build_discriminator, PatchDiscriminator};
pub use unet::{build_generator, UNetStream, WNetGenerator};

/// Which inputs the generator sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// DSM and PAN streams fused by a 1×1 convolution.
    #[default]
    Wnet,
    /// DSM stream only; the PAN input is ignored.
    SingleStream,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub in_size: usize,
    pub base_width: usize,
    pub n_levels: usize,
    pub fusion_width: usize,
    /// Applied on the three decoder levels just outside the innermost one.
    pub dropout_rate: f32,
    pub architecture: Architecture,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            in_size: 256,
            base_width: 64,
            n_levels: 8,
            fusion_width: 64,
            dropout_rate: 0.5,
            architecture: Architecture::Wnet,
        }
    }
}

impl GeneratorSpec {
    /// Channel count after encoder level `i`.
    pub fn width(&self, i: usize) -> usize {
        self.base_width << i.min(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 || self.fusion_width == 0 {
            return Err(Error::Parameter("generator widths must be at least 1".into()));
        }
        if self.n_levels < 2 || self.n_levels > 16 {
            return Err(Error::Parameter(format!("n_levels must be in 2..=16, got {}", self.n_levels)));
        }
        if self.in_size == 0 || self.in_size % (1 << self.n_levels) != 0 {
            return Err(Error::Parameter(format!(
                "in_size {} is not divisible by 2^{}",
                self.in_size, self.n_levels
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSpec {
    /// Output channels of the five convolutions; the last must be 1.
    pub widths: Vec<usize>,
    pub leaky_slope: f32,
    /// Batch normalization after convolutions 2 to 4.
    pub norm: bool,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            widths: vec![64, 128, 256, 512, 1],
            leaky_slope: 0.2,
            norm: true,
        }
    }
}

impl DiscriminatorSpec {
    pub const N_LAYERS: usize = 5;
    pub const STRIDES: [usize; 5] = [2, 2, 2, 1, 1];

    /// Hidden widths scaled from `base` with a single-channel output.
    pub fn with_base(base: usize) -> Self {
        DiscriminatorSpec {
            widths: vec![base, base * 2, base * 4, base * 8, 1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != Self::N_LAYERS {
            return Err(Error::Parameter(format!(
                "discriminator needs exactly {} widths, got {}",
                Self::N_LAYERS,
                self.widths.len()
            )));
        }
        if self.widths.contains(&0) || self.widths[Self::N_LAYERS - 1] != 1 {
            return Err(Error::Parameter("discriminator widths must be positive and end in 1".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Parameter(format!("invalid leaky slope {}", self.leaky_slope)));
        }
        Ok(())
    }

    /// Side length of the probability map for a square input.
    pub fn output_size(&self, in_size: usize) -> Option<usize> {
        Self::STRIDES
            .iter()
            .try_fold(in_size, |n, &s| crate::nn::conv_out(n, 4, s, 1))
    }
}
