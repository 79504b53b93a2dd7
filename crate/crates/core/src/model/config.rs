use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which latent path the generator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Gated stochastic fusion in every latent block.
    Full,
    /// Latent blocks without gates: `z_in = z_prev + n`.
    NoFusion,
    /// No latent generator; decode the stacked key-frame encodings directly
    /// with temporal up-sampling in the decoder.
    Naive,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_fusion" => Ok(Variant::NoFusion),
            "naive" => Ok(Variant::Naive),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected full, no_fusion or naive)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoFusion => "no_fusion",
            Variant::Naive => "naive",
        })
    }
}

/// Architecture hyperparameters. [`ModelConfig::reference`] gives the full-size
/// network; [`ModelConfig::scaled`] divides every hidden width for desk-scale runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Clip length T.
    pub frames: usize,
    /// Noise dimension D.
    pub noise_dim: usize,
    /// Latent channels C.
    pub latent_channels: usize,
    /// Number of latent blocks L.
    pub blocks: usize,
    pub height: usize,
    pub width: usize,
    /// Pixel channels c (1 or 3).
    pub channels: usize,
    pub encoder_widths: [usize; 6],
    pub decoder_widths: [usize; 6],
    pub video_disc_widths: [usize; 4],
    pub image_disc_widths: [usize; 4],
}

impl ModelConfig {
    pub fn reference(variant: Variant, channels: usize) -> Self {
        ModelConfig {
            variant,
            frames: 16,
            noise_dim: 128,
            latent_channels: 64,
            blocks: 24,
            height: 64,
            width: 64,
            channels,
            encoder_widths: [64, 64, 128, 128, 256, 256],
            decoder_widths: [256, 256, 128, 128, 64, 64],
            video_disc_widths: [64, 128, 256, 512],
            image_disc_widths: [64, 128, 256, 512],
        }
    }

    /// Reference architecture with every hidden width divided by `divisor`
    /// (minimum 1). Noise dimension, depth, clip length and resolution are kept.
    pub fn scaled(variant: Variant, channels: usize, divisor: usize) -> Self {
        let d = divisor.max(1);
        let s = |w: usize| (w / d).max(1);
        let r = Self::reference(variant, channels);
        ModelConfig {
            latent_channels: s(r.latent_channels),
            encoder_widths: r.encoder_widths.map(s),
            decoder_widths: r.decoder_widths.map(s),
            video_disc_widths: r.video_disc_widths.map(s),
            image_disc_widths: r.image_disc_widths.map(s),
            ..r
        }
    }

    pub fn latent_height(&self) -> usize {
        self.height / 8
    }

    pub fn latent_width(&self) -> usize {
        self.width / 8
    }

    /// Temporal length inside block `l` (1-based), `None` for out-of-range `l`.
    pub fn block_length(&self, l: usize) -> Option<usize> {
        if l == 0 || l > self.blocks || self.blocks % 3 != 0 {
            return None;
        }
        let per_level = self.blocks / 3;
        Some(self.frames / 4 * (1 << ((l - 1) / per_level)))
    }

    /// Temporal lengths of `z^(0), …, z^(L)`.
    pub fn schedule(&self) -> Vec<usize> {
        std::iter::once(2)
            .chain((1..=self.blocks).filter_map(|l| self.block_length(l)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks == 0 || self.blocks % 3 != 0 {
            return bad(format!("blocks must be a positive multiple of 3, got {}", self.blocks));
        }
        if self.frames != 16 {
            return bad(format!(
                "frames must be 16 (two key-frame encodings doubled three times), got {}",
                self.frames
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Channels(self.channels));
        }
        if self.height % 8 != 0 || self.width % 8 != 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Dimension {
                height: self.height,
                width: self.width,
            });
        }
        if self.height < 64 || self.width < 64 {
            return bad(format!(
                "discriminators need frames of at least 64x64, got {}x{}",
                self.height, self.width
            ));
        }
        let widths = self
            .encoder_widths
            .iter()
            .chain(&self.decoder_widths)
            .chain(&self.video_disc_widths)
            .chain(&self.image_disc_widths);
        if self.noise_dim == 0 || self.latent_channels == 0 || widths.clone().any(|&w| w == 0) {
            return bad("all widths and the noise dimension must be positive".into());
        }
        Ok(())
    }
}
