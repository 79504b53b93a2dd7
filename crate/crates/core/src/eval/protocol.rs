use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{no_grad, Var};
use crate::data::SampleTriple;
use crate::error::{Error, Result};
use crate::model::Generator;
use crate::nn::Ctx;
use crate::tensor::Tensor;

use super::embed::Embedder;
use super::metrics::frechet_distance;

const GENERATION_CHUNK: usize = 8;

/// Key frames of one pair, each `(c, 1, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyFrames {
    pub x_s: Tensor<f32>,
    pub x_e: Tensor<f32>,
}

impl From<&SampleTriple> for KeyFrames {
    fn from(s: &SampleTriple) -> Self {
        KeyFrames {
            x_s: s.x_s(),
            x_e: s.x_e(),
        }
    }
}

fn with_batch_axis(t: &Tensor<f32>) -> Tensor<f32> {
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    t.reshape(&shape)
}

/// Eval-mode generation for `k` noise vectors `(k, D)` sharing one pair of key
/// frames. Returns clips `(c, 16, H, W)`.
pub fn generate_for_pair(gen: &Generator<f32>, keys: &KeyFrames, noise: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
    let k = noise.dim(0);
    let xs = with_batch_axis(&keys.x_s);
    let xe = with_batch_axis(&keys.x_e);
    let mut target = xs.shape().to_vec();
    target[0] = k;
    let out = no_grad(|| {
        gen.generate(
            &Ctx::eval(),
            &Var::constant(xs.broadcast_to(&target)),
            &Var::constant(xe.broadcast_to(&target)),
            &Var::constant(noise.clone()),
            false,
        )
    })?;
    let clip = out.clip.value();
    let per = clip.shape()[1..].to_vec();
    Ok((0..k).map(|i| clip.narrow(0, i, 1).reshape(&per)).collect())
}

/// Samples generated for one pair of key frames.
#[derive(Clone, Debug)]
pub struct PairSamples {
    pub clips: Vec<Tensor<f32>>,
    /// `(n, D)` noise, row `i` producing `clips[i]`.
    pub noise: Tensor<f32>,
}

/// Noise for pair `index` under `seed`: ChaCha stream `index`, `n` rows.
pub fn protocol_noise(seed: u64, index: usize, n: usize, dim: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    Tensor::randn(&[n, dim], 1.0, &mut rng)
}

/// `n` clips per pair, each from an independent noise vector.
pub fn stochastic_protocol(gen: &Generator<f32>, pairs: &[KeyFrames], n: usize, seed: u64) -> Result<Vec<PairSamples>> {
    if n == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    pairs
        .iter()
        .enumerate()
        .map(|(p, keys)| {
            let noise = protocol_noise(seed, p, n, gen.config.noise_dim);
            let mut clips = Vec::with_capacity(n);
            for start in (0..n).step_by(GENERATION_CHUNK) {
                let len = GENERATION_CHUNK.min(n - start);
                clips.extend(generate_for_pair(gen, keys, &noise.narrow(0, start, len))?);
            }
            Ok(PairSamples { clips, noise })
        })
        .collect()
}

/// Decodes the latent map after block `l` through the video generator.
/// Only blocks at full temporal resolution (the last third) are accepted.
pub fn probe_layer(gen: &Generator<f32>, keys: &KeyFrames, u: &Tensor<f32>, l: usize) -> Result<Tensor<f32>> {
    let blocks = gen.config.blocks;
    if l <= 2 * blocks / 3 || l > blocks {
        return Err(Error::LayerRange(l));
    }
    if gen.latent_generator().is_none() {
        return Err(Error::Config("the naive variant has no latent blocks to probe".into()));
    }
    let xs = Var::constant(with_batch_axis(&keys.x_s));
    let xe = Var::constant(with_batch_axis(&keys.x_e));
    let u = Var::constant(u.reshape(&[1, gen.config.noise_dim]));
    let clip = no_grad(|| -> Result<Tensor<f32>> {
        let ctx = Ctx::eval();
        let out = gen.generate(&ctx, &xs, &xe, &u, true)?;
        let clip = gen.decode_level(&ctx, &out.levels[l], &xs, &xe)?;
        Ok(clip.value().clone())
    })?;
    let per = clip.shape()[1..].to_vec();
    Ok(clip.reshape(&per))
}

/// Stacks clips `(c, T, H, W)` into `(N, c, T, H, W)`.
pub fn stack_clips(clips: &[Tensor<f32>]) -> Tensor<f32> {
    let parts: Vec<Tensor<f32>> = clips.iter().map(with_batch_axis).collect();
    let refs: Vec<&Tensor<f32>> = parts.iter().collect();
    Tensor::concat(&refs, 0)
}

/// Fréchet distance between one generated clip per pair and the ground-truth
/// clips of the same pairs.
pub fn frechet_on_samples(gen: &Generator<f32>, samples: &[SampleTriple], embedder: &dyn Embedder, seed: u64) -> Result<f64> {
    let pairs: Vec<KeyFrames> = samples.iter().map(KeyFrames::from).collect();
    let generated: Vec<Tensor<f32>> = stochastic_protocol(gen, &pairs, 1, seed)?
        .into_iter()
        .flat_map(|p| p.clips)
        .collect();
    let real: Vec<Tensor<f32>> = samples.iter().map(|s| s.clip.clone()).collect();
    let e_gen = embedder.embed(&stack_clips(&generated))?;
    let e_real = embedder.embed(&stack_clips(&real))?;
    frechet_distance(&e_gen, &e_real)
}

/// A metric value with its evaluation protocol, serialized as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub ci: Option<[f64; 2]>,
    pub protocol: serde_json::Map<String, serde_json::Value>,
    pub embedder_id: Option<String>,
    pub seed: u64,
}

impl MetricReport {
    pub fn new(
        metric: impl Into<String>,
        value: f64,
        ci: Option<[f64; 2]>,
        protocol: serde_json::Map<String, serde_json::Value>,
        embedder_id: Option<String>,
        seed: u64,
    ) -> Result<Self> {
        let r = MetricReport {
            metric: metric.into(),
            value,
            ci,
            protocol,
            embedder_id,
            seed,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::NonFinite(format!("metric {}", self.metric)));
        }
        if let Some([lo, hi]) = self.ci {
            if !(lo <= self.value && self.value <= hi) {
                return Err(Error::Metric(format!(
                    "interval [{lo}, {hi}] does not contain the estimate {}",
                    self.value
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};

    fn generator(variant: Variant) -> Generator<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cfg = ModelConfig::scaled(variant, 1, 32);
        cfg.noise_dim = 8;
        Generator::new(&cfg, &mut rng).unwrap()
    }

    fn keys(seed: u64) -> KeyFrames {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        KeyFrames {
            x_s: Tensor::uniform(&[1, 1, 64, 64], -1.0, 1.0, &mut rng),
            x_e: Tensor::uniform(&[1, 1, 64, 64], -1.0, 1.0, &mut rng),
        }
    }

    #[test]
    fn protocol_counts_endpoints_and_seeds() {
        let g = generator(Variant::Full);
        let pairs = [keys(1), keys(2)];
        let a = stochastic_protocol(&g, &pairs, 3, 7).unwrap();
        assert_eq!(a.len(), 2);
        for (p, k) in a.iter().zip(&pairs) {
            assert_eq!(p.clips.len(), 3);
            for c in &p.clips {
                assert_eq!(c.narrow(1, 0, 1), k.x_s);
                assert_eq!(c.narrow(1, 15, 1), k.x_e);
            }
        }
        let b = stochastic_protocol(&g, &pairs, 3, 8).unwrap();
        assert_ne!(a[0].clips[0], b[0].clips[0]);
        let again = stochastic_protocol(&g, &pairs, 3, 7).unwrap();
        assert_eq!(a[1].clips, again[1].clips);
    }

    #[test]
    fn probe_range_and_last_layer() {
        let g = generator(Variant::Full);
        let k = keys(3);
        let u = protocol_noise(5, 0, 1, 8);
        assert!(matches!(probe_layer(&g, &k, &u, 16), Err(Error::LayerRange(16))));
        assert!(matches!(probe_layer(&g, &k, &u, 25), Err(Error::LayerRange(25))));
        let probed = probe_layer(&g, &k, &u, 24).unwrap();
        let normal = generate_for_pair(&g, &k, &u).unwrap();
        assert_eq!(probed, normal[0]);
        assert_eq!(probe_layer(&g, &k, &u, 17).unwrap(), probe_layer(&g, &k, &u, 17).unwrap());
    }

    #[test]
    fn report_rejects_interval_missing_value() {
        let p = serde_json::Map::new();
        assert!(MetricReport::new("ssim", 0.5, Some([0.6, 0.7]), p.clone(), None, 0).is_err());
        let r = MetricReport::new("ssim", 0.65, Some([0.6, 0.7]), p, None, 0).unwrap();
        let back: MetricReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
