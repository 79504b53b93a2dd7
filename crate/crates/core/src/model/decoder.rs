//! Video generator `G_V`: transposed 3D convolutions from the latent map to
//! pixels, with a tanh output layer.

use rand::Rng;

use crate::autograd::Var;
use crate::conv::ConvGeom;
use crate::error::{shape_err, Result};
use crate::nn::{BatchNorm, ConvTranspose, Ctx, Module, Param, LEAKY_SLOPE};
use crate::tensor::Float;

use super::ModelConfig;

#[derive(Clone, Debug)]
pub struct Decoder<F: Float> {
    layers: Vec<(ConvTranspose<F>, Option<BatchNorm<F>>)>,
    in_channels: usize,
    in_length: usize,
}

impl<F: Float> Decoder<F> {
    /// Spatial-only up-sampling decoder for the full and no-fusion variants.
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let up = ConvGeom::new([3, 4, 4], [1, 2, 2], [1, 1, 1]);
        Self::build(cfg, up, cfg.frames, rng)
    }

    /// Naive-baseline decoder: the up-sampling layers double time as well.
    pub fn naive(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let up = ConvGeom::new([4, 4, 4], [2, 2, 2], [1, 1, 1]);
        Self::build(cfg, up, 2, rng)
    }

    fn build(cfg: &ModelConfig, up: ConvGeom, in_length: usize, rng: &mut impl Rng) -> Self {
        let w = cfg.decoder_widths;
        let keep = ConvGeom::new([3, 3, 3], [1, 1, 1], [1, 1, 1]);
        let plan = [
            (cfg.latent_channels, w[0], keep),
            (w[0], w[1], keep),
            (w[1], w[2], up),
            (w[2], w[3], keep),
            (w[3], w[4], up),
            (w[4], w[5], keep),
            (w[5], cfg.channels, up),
        ];
        let last = plan.len() - 1;
        let layers = plan
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout, g))| {
                let name = format!("gv.l{}", i + 1);
                let conv = ConvTranspose::new(&format!("{name}.conv"), cin, cout, g, rng);
                let bn = (i != last).then(|| BatchNorm::new(&format!("{name}.bn"), cout));
                (conv, bn)
            })
            .collect();
        Decoder {
            layers,
            in_channels: cfg.latent_channels,
            in_length,
        }
    }

    /// `z: (N, C, T_in, H, W)` → raw video `(N, c, 16, 8H, 8W)` in `[-1, 1]`.
    pub fn decode(&self, ctx: &Ctx<F>, z: &Var<F>) -> Result<Var<F>> {
        let s = z.shape();
        if s.len() != 5 || s[1] != self.in_channels || s[2] != self.in_length {
            return shape_err(format!(
                "decoder expects (N, {}, {}, H, W), got {s:?}",
                self.in_channels, self.in_length
            ));
        }
        let mut h = z.clone();
        for (conv, bn) in &self.layers {
            h = conv.forward(ctx, &h);
            h = match bn {
                Some(bn) => bn.forward(ctx, &h).leaky_relu(LEAKY_SLOPE),
                None => h.tanh(),
            };
        }
        Ok(h)
    }
}

impl<F: Float> Module<F> for Decoder<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        for (c, b) in &self.layers {
            c.visit(f);
            if let Some(b) = b {
                b.visit(f);
            }
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for (c, b) in &mut self.layers {
            c.visit_mut(f);
            if let Some(b) = b {
                b.visit_mut(f);
            }
        }
    }
}

/// Replaces frame 0 with `x_s` and the last frame with `x_e`. Frames are
/// `(N, c, 1, H, W)`; the copy is exact.
pub fn assemble<F: Float>(decoded: &Var<F>, x_s: &Var<F>, x_e: &Var<F>) -> Result<Var<F>> {
    let s = decoded.shape();
    if s.len() != 5 || s[2] < 2 {
        return shape_err(format!("decoded video must be (N, c, T>=2, H, W), got {s:?}"));
    }
    let frame = [s[0], s[1], 1, s[3], s[4]];
    if x_s.shape() != frame || x_e.shape() != frame {
        return shape_err(format!(
            "key frames {:?} / {:?} do not match video {s:?}",
            x_s.shape(),
            x_e.shape()
        ));
    }
    let t = s[2];
    Ok(Var::concat(
        &[x_s.clone(), decoded.narrow(2, 1, t - 2), x_e.clone()],
        2,
    ))
}
