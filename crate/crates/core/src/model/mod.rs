//! The inbetweening network: encoder, latent generator, video decoder and the
//! two discriminators.

mod config;
pub mod decoder;
pub mod discriminator;
pub mod encoder;
pub mod latent;

pub use config::{ModelConfig, Variant};
pub use decoder::{assemble, Decoder};
pub use discriminator::{ImageDiscriminator, Score, VideoDiscriminator};
pub use encoder::{check_frames, Encoder};
pub use latent::{
    compute_gate, fuse, fuse_without_gates, stack_encodings, temporal_upsample, LatentBlock, LatentGenerator,
    LatentTrace, NaiveLatent,
};

use rand::Rng;

use crate::autograd::Var;
use crate::error::{shape_err, Error, Result};
use crate::nn::{Ctx, Module, Param};
use crate::tensor::Float;

#[derive(Clone, Debug)]
enum LatentPath<F: Float> {
    Blocks(LatentGenerator<F>),
    Naive(NaiveLatent<F>),
}

/// Generator side: `E`, `G_Z` (or the naive latent path) and `G_V`.
#[derive(Clone, Debug)]
pub struct Generator<F: Float> {
    pub config: ModelConfig,
    pub encoder: Encoder<F>,
    latent: LatentPath<F>,
    pub decoder: Decoder<F>,
}

/// Result of a generation pass.
pub struct Generation<F: Float> {
    /// Assembled clip `(N, c, T, H0, W0)` with the real key frames at both ends.
    pub clip: Var<F>,
    /// `z^(0), …, z^(L)` when requested (empty for the naive variant).
    pub levels: Vec<Var<F>>,
    pub enc_s: Var<F>,
    pub enc_e: Var<F>,
}

impl<F: Float> Generator<F> {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(config, rng);
        let (latent, decoder) = match config.variant {
            Variant::Naive => (
                LatentPath::Naive(NaiveLatent::new(config, rng)),
                Decoder::naive(config, rng),
            ),
            _ => (
                LatentPath::Blocks(LatentGenerator::new(config, rng)?),
                Decoder::new(config, rng),
            ),
        };
        Ok(Generator {
            config: config.clone(),
            encoder,
            latent,
            decoder,
        })
    }

    pub fn latent_generator(&self) -> Option<&LatentGenerator<F>> {
        match &self.latent {
            LatentPath::Blocks(g) => Some(g),
            LatentPath::Naive(_) => None,
        }
    }

    /// Encodes both key frames in one batch so they share normalization statistics.
    pub fn encode_pair(&self, ctx: &Ctx<F>, x_s: &Var<F>, x_e: &Var<F>) -> Result<(Var<F>, Var<F>)> {
        if x_s.shape() != x_e.shape() {
            return shape_err(format!(
                "start frame {:?} and end frame {:?} differ in shape",
                x_s.shape(),
                x_e.shape()
            ));
        }
        self.check_frame_size(x_s.shape())?;
        let n = x_s.shape()[0];
        let both = self
            .encoder
            .encode(ctx, &Var::concat(&[x_s.clone(), x_e.clone()], 0))?;
        Ok((both.narrow(0, 0, n), both.narrow(0, n, n)))
    }

    fn check_frame_size(&self, shape: &[usize]) -> Result<()> {
        check_frames(shape, self.config.channels)?;
        if shape[3] != self.config.height || shape[4] != self.config.width {
            return Err(Error::Dimension {
                height: shape[3],
                width: shape[4],
            });
        }
        Ok(())
    }

    /// Full forward pass: `x_s, x_e: (N, c, 1, H0, W0)`, `u: (N, D)`.
    pub fn generate(&self, ctx: &Ctx<F>, x_s: &Var<F>, x_e: &Var<F>, u: &Var<F>, keep_levels: bool) -> Result<Generation<F>> {
        let (enc_s, enc_e) = self.encode_pair(ctx, x_s, x_e)?;
        if u.shape() != [x_s.shape()[0], self.config.noise_dim] {
            return shape_err(format!(
                "noise must be ({}, {}), got {:?}",
                x_s.shape()[0],
                self.config.noise_dim,
                u.shape()
            ));
        }
        let (z, levels) = match &self.latent {
            LatentPath::Blocks(g) => {
                let trace = g.generate(ctx, &enc_s, &enc_e, u, keep_levels)?;
                (trace.output, trace.levels)
            }
            LatentPath::Naive(g) => (g.generate(ctx, &enc_s, &enc_e, u)?, Vec::new()),
        };
        let raw = self.decoder.decode(ctx, &z)?;
        let clip = assemble(&raw, x_s, x_e)?;
        Ok(Generation {
            clip,
            levels,
            enc_s,
            enc_e,
        })
    }

    /// Decodes an intermediate latent map `z^(l)` of full temporal length and
    /// assembles it with the key frames.
    pub fn decode_level(&self, ctx: &Ctx<F>, z: &Var<F>, x_s: &Var<F>, x_e: &Var<F>) -> Result<Var<F>> {
        let raw = self.decoder.decode(ctx, z)?;
        assemble(&raw, x_s, x_e)
    }
}

impl<F: Float> Module<F> for Generator<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.encoder.visit(f);
        match &self.latent {
            LatentPath::Blocks(g) => g.visit(f),
            LatentPath::Naive(g) => g.visit(f),
        }
        self.decoder.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.encoder.visit_mut(f);
        match &mut self.latent {
            LatentPath::Blocks(g) => g.visit_mut(f),
            LatentPath::Naive(g) => g.visit_mut(f),
        }
        self.decoder.visit_mut(f);
    }
}

#[derive(Clone, Debug)]
pub struct Discriminators<F: Float> {
    pub video: VideoDiscriminator<F>,
    pub image: ImageDiscriminator<F>,
}

impl<F: Float> Discriminators<F> {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        Ok(Discriminators {
            video: VideoDiscriminator::new(config, rng),
            image: ImageDiscriminator::new(config, rng),
        })
    }
}

impl<F: Float> Module<F> for Discriminators<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.video.visit(f);
        self.image.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.video.visit_mut(f);
        self.image.visit_mut(f);
    }
}

/// Generator and discriminators together.
#[derive(Clone, Debug)]
pub struct Model<F: Float> {
    pub generator: Generator<F>,
    pub discriminators: Discriminators<F>,
}

impl<F: Float> Model<F> {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        Ok(Model {
            generator: Generator::new(config, rng)?,
            discriminators: Discriminators::new(config, rng)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.generator.config
    }
}

impl<F: Float> Module<F> for Model<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.generator.visit(f);
        self.discriminators.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.generator.visit_mut(f);
        self.discriminators.visit_mut(f);
    }
}
