//! Image encoder `E(x)`: alternating stride-2 4×4 and 3×3 convolutions, then a
//! 3×3 layer condensing to the latent channel count. Every layer is followed by
//! batch normalization and leaky ReLU.

use rand::Rng;

use crate::autograd::Var;
use crate::conv::ConvGeom;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv, Ctx, Module, Param, LEAKY_SLOPE};
use crate::tensor::Float;

use super::ModelConfig;

#[derive(Clone, Debug)]
pub struct Encoder<F: Float> {
    layers: Vec<(Conv<F>, BatchNorm<F>)>,
    channels: usize,
}

impl<F: Float> Encoder<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let w = cfg.encoder_widths;
        let down = ConvGeom::plane(4, 2, 1);
        let keep = ConvGeom::plane(3, 1, 1);
        let plan = [
            (cfg.channels, w[0], down),
            (w[0], w[1], keep),
            (w[1], w[2], down),
            (w[2], w[3], keep),
            (w[3], w[4], down),
            (w[4], w[5], keep),
            (w[5], cfg.latent_channels, keep),
        ];
        let layers = plan
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout, g))| {
                let name = format!("enc.l{}", i + 1);
                (
                    Conv::new(&format!("{name}.conv"), cin, cout, g, rng),
                    BatchNorm::new(&format!("{name}.bn"), cout),
                )
            })
            .collect();
        Encoder {
            layers,
            channels: cfg.channels,
        }
    }

    /// `frames: (N, c, 1, H0, W0)` → `(N, C, 1, H0/8, W0/8)`.
    pub fn encode(&self, ctx: &Ctx<F>, frames: &Var<F>) -> Result<Var<F>> {
        check_frames(frames.shape(), self.channels)?;
        let mut h = frames.clone();
        for (conv, bn) in &self.layers {
            h = bn.forward(ctx, &conv.forward(ctx, &h)).leaky_relu(LEAKY_SLOPE);
        }
        Ok(h)
    }
}

/// Validates a frame batch `(N, c, 1, H0, W0)` against the expected channel count.
pub fn check_frames(shape: &[usize], channels: usize) -> Result<()> {
    if shape.len() != 5 || shape[2] != 1 || shape[0] == 0 {
        return Err(Error::Shape(format!("expected frames (N, c, 1, H, W), got {shape:?}")));
    }
    if shape[1] != 1 && shape[1] != 3 {
        return Err(Error::Channels(shape[1]));
    }
    if shape[1] != channels {
        return Err(Error::Shape(format!(
            "model expects {channels} channel(s), frames have {}",
            shape[1]
        )));
    }
    let (h, w) = (shape[3], shape[4]);
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Dimension { height: h, width: w });
    }
    Ok(())
}

impl<F: Float> Module<F> for Encoder<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        for (c, b) in &self.layers {
            c.visit(f);
            b.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for (c, b) in &mut self.layers {
            c.visit_mut(f);
            b.visit_mut(f);
        }
    }
}
