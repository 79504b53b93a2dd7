//! Video discriminator `D_V` (3D convolutions, one logit per clip) and image
//! discriminator `D_I` (residual 2D convolutions, one logit per frame). Both
//! use layer normalization and return pre-sigmoid logits of shape `(N, 1)`.

use rand::Rng;

use crate::autograd::Var;
use crate::conv::ConvGeom;
use crate::error::{shape_err, Result};
use crate::nn::{Conv, Ctx, LayerNorm, Linear, Module, Param, LEAKY_SLOPE};
use crate::tensor::Float;

use super::ModelConfig;

/// A discriminator output: the logit and its sigmoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub logit: f64,
    pub p: f64,
}

impl Score {
    pub fn from_logit(logit: f64) -> Self {
        let p = if logit >= 0.0 {
            1.0 / (1.0 + (-logit).exp())
        } else {
            let e = logit.exp();
            e / (1.0 + e)
        };
        Score { logit, p }
    }

    pub fn from_logits<F: Float>(logits: &Var<F>) -> Vec<Score> {
        logits
            .value()
            .data()
            .iter()
            .map(|v| Score::from_logit(v.to_f64().unwrap_or(f64::NAN)))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct VideoDiscriminator<F: Float> {
    layers: Vec<(Conv<F>, LayerNorm<F>)>,
    fc: Linear<F>,
    input: [usize; 4],
}

impl<F: Float> VideoDiscriminator<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let g = ConvGeom::new([4, 4, 4], [1, 2, 2], [0, 1, 1]);
        let mut cin = cfg.channels;
        let mut dims = [cfg.frames, cfg.height, cfg.width];
        let mut layers = Vec::new();
        for (i, &cout) in cfg.video_disc_widths.iter().enumerate() {
            let name = format!("dv.l{}", i + 1);
            layers.push((
                Conv::new(&format!("{name}.conv"), cin, cout, g, rng),
                LayerNorm::new(&format!("{name}.ln"), cout),
            ));
            dims = g.conv_out(dims).expect("discriminator input large enough");
            cin = cout;
        }
        let flat = cin * dims.iter().product::<usize>();
        VideoDiscriminator {
            layers,
            fc: Linear::new("dv.fc", flat, 1, rng),
            input: [cfg.channels, cfg.frames, cfg.height, cfg.width],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.fc.weight.value.dim(1)
    }

    /// Flattened activations before the final linear layer, `(N, feature_dim)`.
    pub fn features(&self, ctx: &Ctx<F>, clip: &Var<F>) -> Result<Var<F>> {
        let s = clip.shape();
        if s.len() != 5 || s[1..] != self.input {
            return shape_err(format!("video discriminator expects (N, {:?}), got {s:?}", self.input));
        }
        let mut h = clip.clone();
        for (conv, ln) in &self.layers {
            h = ln.forward(ctx, &conv.forward(ctx, &h)).leaky_relu(LEAKY_SLOPE);
        }
        Ok(h.reshape(&[s[0], self.feature_dim()]))
    }

    /// Intermediate `(C, T, H, W)` sizes after each convolution.
    pub fn layer_shapes(&self) -> Vec<[usize; 4]> {
        let mut dims = [self.input[1], self.input[2], self.input[3]];
        self.layers
            .iter()
            .map(|(c, _)| {
                dims = c.geom.conv_out(dims).expect("validated at construction");
                [c.out_channels(), dims[0], dims[1], dims[2]]
            })
            .collect()
    }

    pub fn logits(&self, ctx: &Ctx<F>, clip: &Var<F>) -> Result<Var<F>> {
        Ok(self.fc.forward(ctx, &self.features(ctx, clip)?))
    }
}

impl<F: Float> Module<F> for VideoDiscriminator<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        for (c, l) in &self.layers {
            c.visit(f);
            l.visit(f);
        }
        self.fc.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for (c, l) in &mut self.layers {
            c.visit_mut(f);
            l.visit_mut(f);
        }
        self.fc.visit_mut(f);
    }
}

/// Down-sampling stage: `conv_k4s2(h) + conv_1x1(avgpool2(skip))`, then layer
/// norm and leaky ReLU, then an optional 3×3 refinement layer.
#[derive(Clone, Debug)]
struct ResidualStage<F: Float> {
    down: Conv<F>,
    shortcut: Conv<F>,
    norm: LayerNorm<F>,
    refine: Option<(Conv<F>, LayerNorm<F>)>,
}

#[derive(Clone, Debug)]
pub struct ImageDiscriminator<F: Float> {
    stem: (Conv<F>, LayerNorm<F>),
    stages: Vec<ResidualStage<F>>,
    fc: Linear<F>,
    input: [usize; 3],
}

/// 2×2 average pooling with stride 2 on `(N, C, 1, H, W)`.
pub fn avg_pool2<F: Float>(x: &Var<F>) -> Var<F> {
    let s = x.shape().to_vec();
    let (n, c, d, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    x.reshape(&[n, c, d, h / 2, 2, w / 2, 2])
        .sum_axes(&[4, 6])
        .reshape(&[n, c, d, h / 2, w / 2])
        .scale(0.25)
}

impl<F: Float> ImageDiscriminator<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let c = cfg.channels;
        let down = ConvGeom::plane(4, 2, 1);
        let keep = ConvGeom::plane(3, 1, 1);
        let point = ConvGeom::plane(1, 1, 0);
        let stem = (
            Conv::new("di.l1.conv", c, c, keep, rng),
            LayerNorm::new("di.l1.ln", c),
        );
        let widths = cfg.image_disc_widths;
        let mut stages = Vec::new();
        // Layer numbering: stage k holds layers L(2k+2) and L(2k+3).
        let mut cin = c;
        for (k, &w) in widths.iter().enumerate() {
            let l = 2 * k + 2;
            let refine = (k + 1 < widths.len()).then(|| {
                (
                    Conv::new(&format!("di.l{}.conv", l + 1), w, w, keep, rng),
                    LayerNorm::new(&format!("di.l{}.ln", l + 1), w),
                )
            });
            stages.push(ResidualStage {
                down: Conv::new(&format!("di.l{l}.conv"), cin, w, down, rng),
                shortcut: Conv::new(&format!("di.l{l}.shortcut"), cin, w, point, rng),
                norm: LayerNorm::new(&format!("di.l{l}.ln"), w),
                refine,
            });
            cin = w;
        }
        let flat = cin * (cfg.height >> widths.len()) * (cfg.width >> widths.len());
        ImageDiscriminator {
            stem,
            stages,
            fc: Linear::new("di.fc", flat, 1, rng),
            input: [cfg.channels, cfg.height, cfg.width],
        }
    }

    /// Spatial sizes after the stem and each residual stage.
    pub fn stage_sizes(&self) -> Vec<[usize; 2]> {
        let (mut h, mut w) = (self.input[1], self.input[2]);
        let mut out = vec![[h, w]];
        for _ in &self.stages {
            h /= 2;
            w /= 2;
            out.push([h, w]);
        }
        out
    }

    pub fn features(&self, ctx: &Ctx<F>, frames: &Var<F>) -> Result<Var<F>> {
        let s = frames.shape();
        if s.len() != 5 || s[2] != 1 || [s[1], s[3], s[4]] != self.input {
            return shape_err(format!(
                "image discriminator expects (N, {}, 1, {}, {}), got {s:?}",
                self.input[0], self.input[1], self.input[2]
            ));
        }
        let (conv, ln) = &self.stem;
        let mut h = ln.forward(ctx, &conv.forward(ctx, frames)).leaky_relu(LEAKY_SLOPE);
        // The shortcut of each stage starts from the previous stage output;
        // for the first stage that is the image itself.
        let mut skip = frames.clone();
        for st in &self.stages {
            let main = st.down.forward(ctx, &h);
            let short = st.shortcut.forward(ctx, &avg_pool2(&skip));
            let out = st.norm.forward(ctx, &main.add(&short)).leaky_relu(LEAKY_SLOPE);
            skip = out.clone();
            h = match &st.refine {
                Some((conv, ln)) => ln.forward(ctx, &conv.forward(ctx, &out)).leaky_relu(LEAKY_SLOPE),
                None => out,
            };
        }
        let n = s[0];
        let dim = self.fc.weight.value.dim(1);
        Ok(h.reshape(&[n, dim]))
    }

    pub fn logits(&self, ctx: &Ctx<F>, frames: &Var<F>) -> Result<Var<F>> {
        Ok(self.fc.forward(ctx, &self.features(ctx, frames)?))
    }
}

impl<F: Float> Module<F> for ImageDiscriminator<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.stem.0.visit(f);
        self.stem.1.visit(f);
        for st in &self.stages {
            st.down.visit(f);
            st.shortcut.visit(f);
            st.norm.visit(f);
            if let Some((c, l)) = &st.refine {
                c.visit(f);
                l.visit(f);
            }
        }
        self.fc.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.stem.0.visit_mut(f);
        self.stem.1.visit_mut(f);
        for st in &mut self.stages {
            st.down.visit_mut(f);
            st.shortcut.visit_mut(f);
            st.norm.visit_mut(f);
            if let Some((c, l)) = &mut st.refine {
                c.visit_mut(f);
                l.visit_mut(f);
            }
        }
        self.fc.visit_mut(f);
    }
}
