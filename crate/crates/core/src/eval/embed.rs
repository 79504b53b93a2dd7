use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Var;
use crate::conv::{conv, ConvGeom};
use crate::error::{shape_err, Result};
use crate::model::VideoDiscriminator;
use crate::nn::Ctx;
use crate::tensor::Tensor;

/// Maps clips `(N, c, T, H, W)` to fixed-length vectors.
pub trait Embedder {
    /// Stable identifier recorded in metric reports.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, clips: &Tensor<f32>) -> Result<Vec<Vec<f64>>>;
}

/// Seed of the frozen random embedder's weights.
pub const RANDOM_EMBEDDER_SEED: u64 = 0x1B7E_2019;

const EMBED_CHUNK: usize = 16;

/// Repeats a single channel three times; 3-channel input is returned as is.
pub fn to_rgb(clips: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = clips.shape();
    if s.len() != 5 {
        return shape_err(format!("clips must be (N, c, T, H, W), got {s:?}"));
    }
    match s[1] {
        3 => Ok(clips.clone()),
        1 => Ok(Tensor::concat(&[clips, clips, clips], 1)),
        c => Err(crate::Error::Channels(c)),
    }
}

/// Three stride-2 3D convolutions (3→16→32→64 channels, kernel 4) with
/// leaky ReLU and frozen He-normal weights, followed by per-channel mean and
/// standard deviation pooling: a 128-dimensional embedding. Not comparable to
/// published Fréchet video distances.
#[derive(Clone, Debug)]
pub struct RandomConvEmbedder {
    weights: Vec<Tensor<f32>>,
    seed: u64,
}

impl RandomConvEmbedder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = [3, 16, 32, 64];
        let weights = chans
            .windows(2)
            .map(|w| {
                let fan_in = (w[0] * 64) as f64;
                Tensor::randn(&[w[1], w[0], 4, 4, 4], (2.0 / fan_in).sqrt(), &mut rng)
            })
            .collect();
        RandomConvEmbedder { weights, seed }
    }
}

impl Default for RandomConvEmbedder {
    fn default() -> Self {
        Self::new(RANDOM_EMBEDDER_SEED)
    }
}

impl Embedder for RandomConvEmbedder {
    fn id(&self) -> String {
        format!("random-conv3d-v1-seed{}", self.seed)
    }

    fn dim(&self) -> usize {
        2 * self.weights.last().map_or(0, |w| w.dim(0))
    }

    fn embed(&self, clips: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
        let clips = to_rgb(clips)?;
        let g = ConvGeom::new([4, 4, 4], [2, 2, 2], [1, 1, 1]);
        let n = clips.dim(0);
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(EMBED_CHUNK) {
            let len = EMBED_CHUNK.min(n - start);
            let mut h = clips.narrow(0, start, len);
            for w in &self.weights {
                h = conv(&h, w, &g).map(|v| if v > 0.0 { v } else { 0.2 * v });
            }
            let s = h.shape().to_vec();
            let vol = s[2] * s[3] * s[4];
            for i in 0..len {
                let mut e = Vec::with_capacity(2 * s[1]);
                let mut sds = Vec::with_capacity(s[1]);
                for c in 0..s[1] {
                    let off = (i * s[1] + c) * vol;
                    let vals = &h.data()[off..off + vol];
                    let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / vol as f64;
                    let var = vals.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / vol as f64;
                    e.push(mean);
                    sds.push(var.sqrt());
                }
                e.extend(sds);
                out.push(e);
            }
        }
        Ok(out)
    }
}

/// Penultimate activations of a video discriminator.
pub struct VideoFeatureEmbedder {
    disc: VideoDiscriminator<f32>,
    tag: String,
}

impl VideoFeatureEmbedder {
    /// `tag` identifies the weights (for example a checkpoint hash).
    pub fn new(disc: VideoDiscriminator<f32>, tag: impl Into<String>) -> Self {
        VideoFeatureEmbedder { disc, tag: tag.into() }
    }
}

impl Embedder for VideoFeatureEmbedder {
    fn id(&self) -> String {
        format!("video-discriminator-features-{}", self.tag)
    }

    fn dim(&self) -> usize {
        self.disc.feature_dim()
    }

    fn embed(&self, clips: &Tensor<f32>) -> Result<Vec<Vec<f64>>> {
        let ctx = Ctx::eval();
        let n = clips.dim(0);
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(EMBED_CHUNK) {
            let len = EMBED_CHUNK.min(n - start);
            let f = self.disc.features(&ctx, &Var::constant(clips.narrow(0, start, len)))?;
            let d = f.shape()[1];
            for row in f.value().data().chunks(d) {
                out.push(row.iter().map(|&v| v as f64).collect());
            }
        }
        Ok(out)
    }
}
