//! Latent representation generator `G_Z`.
//!
//! Layout conventions: latent maps are `(N, C, T, H, W)`; per-time-step
//! sequences derived from the noise (projected noise, gates, noise component)
//! are `(N, C, T, 1, 1)` so they broadcast over space; key-frame encodings are
//! `(N, C, 1, H, W)` so they broadcast over time.

use rand::Rng;

use crate::autograd::Var;
use crate::conv::ConvGeom;
use crate::error::{shape_err, Error, Result};
use crate::nn::{BatchNorm, Conv, Ctx, Linear, Module, Param, LEAKY_SLOPE};
use crate::tensor::Float;

use super::{ModelConfig, Variant};

/// One residual block at a fixed temporal length.
#[derive(Clone, Debug)]
pub struct LatentBlock<F: Float> {
    pub length: usize,
    channels: usize,
    proj: Linear<F>,
    gates: Option<(Conv<F>, Conv<F>)>,
    noise: Conv<F>,
    conv1: Conv<F>,
    bn1: BatchNorm<F>,
    conv2: Conv<F>,
    bn2: BatchNorm<F>,
}

impl<F: Float> LatentBlock<F> {
    pub fn new(name: &str, length: usize, channels: usize, noise_dim: usize, fusion: bool, rng: &mut impl Rng) -> Self {
        let temporal = ConvGeom::temporal(3, 1, 1);
        let cube = ConvGeom::new([3, 3, 3], [1, 1, 1], [1, 1, 1]);
        let c = channels;
        let gates = fusion.then(|| {
            (
                Conv::new(&format!("{name}.gate_s"), c, c, temporal, rng),
                Conv::new(&format!("{name}.gate_e"), c, c, temporal, rng),
            )
        });
        LatentBlock {
            length,
            channels,
            proj: Linear::new(&format!("{name}.proj"), noise_dim, length * c, rng),
            gates,
            noise: Conv::new(&format!("{name}.noise"), c, c, temporal, rng),
            conv1: Conv::new(&format!("{name}.conv1"), c, c, cube, rng),
            bn1: BatchNorm::new(&format!("{name}.bn1"), c),
            conv2: Conv::new(&format!("{name}.conv2"), c, c, cube, rng),
            bn2: BatchNorm::new(&format!("{name}.bn2"), c),
        }
    }

    pub fn has_gates(&self) -> bool {
        self.gates.is_some()
    }

    /// `A u + b`, viewed as `(N, C, T, 1, 1)`. Row `t·C + c` of `A` feeds time
    /// step `t`, channel `c`.
    pub fn project_noise(&self, ctx: &Ctx<F>, u: &Var<F>) -> Result<Var<F>> {
        let s = u.shape();
        let d = self.proj.weight.value.dim(1);
        if s.len() != 2 || s[1] != d {
            return shape_err(format!("noise must be (N, {d}), got {s:?}"));
        }
        let n = s[0];
        Ok(self
            .proj
            .forward(ctx, u)
            .reshape(&[n, self.length, self.channels])
            .permute(&[0, 2, 1])
            .reshape(&[n, self.channels, self.length, 1, 1]))
    }

    /// Start and end gates, or `None` for the variant without fusion.
    pub fn gates(&self, ctx: &Ctx<F>, u_l: &Var<F>) -> Option<(Var<F>, Var<F>)> {
        self.gates
            .as_ref()
            .map(|(s, e)| (compute_gate(ctx, u_l, s), compute_gate(ctx, u_l, e)))
    }

    /// The additional stochastic component `n = u_l * k_n + b_n`.
    pub fn noise_component(&self, ctx: &Ctx<F>, u_l: &Var<F>) -> Var<F> {
        self.noise.forward(ctx, u_l)
    }

    /// `h(z_prev + BN(conv2(h(BN(conv1(z_in))))))`.
    pub fn residual(&self, ctx: &Ctx<F>, z_prev: &Var<F>, z_in: &Var<F>) -> Var<F> {
        let a = self
            .bn1
            .forward(ctx, &self.conv1.forward(ctx, z_in))
            .leaky_relu(LEAKY_SLOPE);
        let r = self.bn2.forward(ctx, &self.conv2.forward(ctx, &a));
        z_prev.add(&r).leaky_relu(LEAKY_SLOPE)
    }

    pub fn apply(&self, ctx: &Ctx<F>, z_prev: &Var<F>, enc_s: &Var<F>, enc_e: &Var<F>, u: &Var<F>) -> Result<Var<F>> {
        let zs = z_prev.shape();
        if zs.len() != 5 || zs[1] != self.channels || zs[2] != self.length {
            return shape_err(format!(
                "block expects latent (N, {}, {}, H, W), got {zs:?}",
                self.channels, self.length
            ));
        }
        let u_l = self.project_noise(ctx, u)?;
        let n = self.noise_component(ctx, &u_l);
        let z_in = match self.gates(ctx, &u_l) {
            Some((g_s, g_e)) => fuse(z_prev, &g_s, &g_e, &n, enc_s, enc_e)?,
            None => fuse_without_gates(z_prev, &n)?,
        };
        Ok(self.residual(ctx, z_prev, &z_in))
    }
}

impl<F: Float> Module<F> for LatentBlock<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.proj.visit(f);
        if let Some((s, e)) = &self.gates {
            s.visit(f);
            e.visit(f);
        }
        self.noise.visit(f);
        self.conv1.visit(f);
        self.bn1.visit(f);
        self.conv2.visit(f);
        self.bn2.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.proj.visit_mut(f);
        if let Some((s, e)) = &mut self.gates {
            s.visit_mut(f);
            e.visit_mut(f);
        }
        self.noise.visit_mut(f);
        self.conv1.visit_mut(f);
        self.bn1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.bn2.visit_mut(f);
    }
}

/// `σ(u_l * k + b)` with a width-3, same-length temporal convolution.
pub fn compute_gate<F: Float>(ctx: &Ctx<F>, u_l: &Var<F>, conv: &Conv<F>) -> Var<F> {
    conv.forward(ctx, u_l).sigmoid()
}

fn check_fuse_shapes(z: &[usize], seq: &[&[usize]], enc: &[&[usize]]) -> Result<()> {
    if z.len() != 5 {
        return shape_err(format!("latent must be 5-D, got {z:?}"));
    }
    let (n, c, t, h, w) = (z[0], z[1], z[2], z[3], z[4]);
    for s in seq {
        if *s != [n, c, t, 1, 1] {
            return shape_err(format!("sequence {s:?} does not match latent {z:?}"));
        }
    }
    for e in enc {
        if *e != [n, c, 1, h, w] {
            return shape_err(format!("encoding {e:?} does not match latent {z:?}"));
        }
    }
    Ok(())
}

/// `z_in = g_s·B(enc_s) + g_e·B(enc_e) + max(0, 1 − g_s − g_e)·z_prev + B'(n)`.
pub fn fuse<F: Float>(
    z_prev: &Var<F>,
    g_s: &Var<F>,
    g_e: &Var<F>,
    n: &Var<F>,
    enc_s: &Var<F>,
    enc_e: &Var<F>,
) -> Result<Var<F>> {
    check_fuse_shapes(
        z_prev.shape(),
        &[g_s.shape(), g_e.shape(), n.shape()],
        &[enc_s.shape(), enc_e.shape()],
    )?;
    let keep = g_s.add(g_e).neg().add_scalar(1.0).relu();
    Ok(g_s
        .mul(enc_s)
        .add(&g_e.mul(enc_e))
        .add(&keep.mul(z_prev))
        .add(n))
}

/// `z_in = z_prev + B'(n)`.
pub fn fuse_without_gates<F: Float>(z_prev: &Var<F>, n: &Var<F>) -> Result<Var<F>> {
    check_fuse_shapes(z_prev.shape(), &[n.shape()], &[])?;
    Ok(z_prev.add(n))
}

/// Nearest-neighbour repeat along time: `a b c` → `a a b b c c`.
pub fn temporal_upsample<F: Float>(z: &Var<F>) -> Var<F> {
    let s = z.shape().to_vec();
    let (n, c, t, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    z.reshape(&[n, c, t, 1, h, w])
        .broadcast_to(&[n, c, t, 2, h, w])
        .reshape(&[n, c, 2 * t, h, w])
}

/// `z^(0) = (enc_s, enc_e)` stacked along time.
pub fn stack_encodings<F: Float>(enc_s: &Var<F>, enc_e: &Var<F>) -> Result<Var<F>> {
    if enc_s.shape() != enc_e.shape() || enc_s.shape().len() != 5 || enc_s.shape()[2] != 1 {
        return shape_err(format!(
            "encodings must both be (N, C, 1, H, W), got {:?} and {:?}",
            enc_s.shape(),
            enc_e.shape()
        ));
    }
    Ok(Var::concat(&[enc_s.clone(), enc_e.clone()], 2))
}

/// Output of the latent generator. `levels[l]` is `z^(l)` when intermediates
/// were requested, otherwise only the final map is kept.
pub struct LatentTrace<F: Float> {
    pub output: Var<F>,
    pub levels: Vec<Var<F>>,
}

#[derive(Clone, Debug)]
pub struct LatentGenerator<F: Float> {
    blocks: Vec<LatentBlock<F>>,
    noise_dim: usize,
}

impl<F: Float> LatentGenerator<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.blocks == 0 || cfg.blocks % 3 != 0 {
            return Err(Error::Config(format!(
                "number of latent blocks must be a positive multiple of 3, got {}",
                cfg.blocks
            )));
        }
        let fusion = cfg.variant == Variant::Full;
        let blocks = (1..=cfg.blocks)
            .map(|l| {
                let len = cfg.block_length(l).expect("validated block index");
                LatentBlock::new(
                    &format!("gz.block{l:02}"),
                    len,
                    cfg.latent_channels,
                    cfg.noise_dim,
                    fusion,
                    rng,
                )
            })
            .collect();
        Ok(LatentGenerator {
            blocks,
            noise_dim: cfg.noise_dim,
        })
    }

    pub fn blocks(&self) -> &[LatentBlock<F>] {
        &self.blocks
    }

    pub fn fusion(&self) -> bool {
        self.blocks.first().is_some_and(|b| b.has_gates())
    }

    /// Runs all blocks, doubling the temporal length before block 1 and
    /// whenever the next block's length is twice the current one.
    pub fn generate(
        &self,
        ctx: &Ctx<F>,
        enc_s: &Var<F>,
        enc_e: &Var<F>,
        u: &Var<F>,
        keep_levels: bool,
    ) -> Result<LatentTrace<F>> {
        if u.shape().len() != 2 || u.shape()[1] != self.noise_dim {
            return shape_err(format!("noise must be (N, {}), got {:?}", self.noise_dim, u.shape()));
        }
        let mut z = stack_encodings(enc_s, enc_e)?;
        let mut levels = Vec::new();
        if keep_levels {
            levels.push(z.clone());
        }
        for block in &self.blocks {
            while z.shape()[2] < block.length {
                z = temporal_upsample(&z);
            }
            z = block.apply(ctx, &z, enc_s, enc_e, u)?;
            if keep_levels {
                levels.push(z.clone());
            }
        }
        Ok(LatentTrace { output: z, levels })
    }
}

impl<F: Float> Module<F> for LatentGenerator<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        for b in &self.blocks {
            b.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for b in &mut self.blocks {
            b.visit_mut(f);
        }
    }
}

/// Latent path of the naive baseline: the stacked encodings plus a spatially
/// uniform noise map `W u + b`, viewed as `(N, C, 2, 1, 1)`.
#[derive(Clone, Debug)]
pub struct NaiveLatent<F: Float> {
    proj: Linear<F>,
    channels: usize,
}

impl<F: Float> NaiveLatent<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        NaiveLatent {
            proj: Linear::new("gz.naive.proj", cfg.noise_dim, 2 * cfg.latent_channels, rng),
            channels: cfg.latent_channels,
        }
    }

    pub fn noise_map(&self, ctx: &Ctx<F>, u: &Var<F>) -> Result<Var<F>> {
        let d = self.proj.weight.value.dim(1);
        if u.shape().len() != 2 || u.shape()[1] != d {
            return shape_err(format!("noise must be (N, {d}), got {:?}", u.shape()));
        }
        let n = u.shape()[0];
        Ok(self
            .proj
            .forward(ctx, u)
            .reshape(&[n, 2, self.channels])
            .permute(&[0, 2, 1])
            .reshape(&[n, self.channels, 2, 1, 1]))
    }

    pub fn generate(&self, ctx: &Ctx<F>, enc_s: &Var<F>, enc_e: &Var<F>, u: &Var<F>) -> Result<Var<F>> {
        let z0 = stack_encodings(enc_s, enc_e)?;
        Ok(z0.add(&self.noise_map(ctx, u)?))
    }
}

impl<F: Float> Module<F> for NaiveLatent<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.proj.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.proj.visit_mut(f);
    }
}
