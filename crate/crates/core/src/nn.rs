//! Parameter containers, the forward-pass context, and the layers the model is
//! assembled from. Activations are 5-D `(N, C, D, H, W)`; single images use a
//! unit depth axis.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{conv, conv_transpose, Gradients, Var};
use crate::conv::ConvGeom;
use crate::tensor::{Float, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub struct Param<F: Float> {
    pub name: String,
    pub value: Tensor<F>,
    /// Buffers (normalization running statistics) are saved but not optimized.
    pub trainable: bool,
}

impl<F: Float> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        Param {
            name: name.into(),
            value,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, value: Tensor<F>) -> Self {
        Param {
            name: name.into(),
            value,
            trainable: false,
        }
    }
}

pub trait Module<F: Float> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>));

    /// Number of trainable scalars.
    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if p.trainable {
                n += p.value.numel()
            }
        });
        n
    }

    fn named_tensors(&self) -> Vec<(String, Tensor<F>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.value.clone())));
        out
    }

    /// Overwrites values by name. Unknown names are ignored; the caller checks coverage.
    fn assign(&mut self, values: &HashMap<String, Tensor<F>>) -> usize {
        let mut hit = 0;
        self.visit_mut(&mut |p| {
            if let Some(v) = values.get(&p.name) {
                p.value = v.clone();
                hit += 1;
            }
        });
        hit
    }
}

/// Per-forward-pass state: normalization mode, whether to record a graph,
/// leaf variables created for parameters, and pending running-stat updates.
pub struct Ctx<F: Float> {
    mode: Mode,
    track: bool,
    leaves: RefCell<HashMap<String, Var<F>>>,
    buffer_updates: RefCell<Vec<(String, Tensor<F>)>>,
}

impl<F: Float> Ctx<F> {
    pub fn new(mode: Mode, track: bool) -> Self {
        Ctx {
            mode,
            track,
            leaves: RefCell::new(HashMap::new()),
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    /// Inference: running statistics, no graph.
    pub fn eval() -> Self {
        Self::new(Mode::Eval, false)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn var(&self, p: &Param<F>) -> Var<F> {
        self.leaves
            .borrow_mut()
            .entry(p.name.clone())
            .or_insert_with(|| Var::leaf(p.value.clone(), self.track && p.trainable))
            .clone()
    }

    /// Uses `var` for parameter `name` in this pass instead of a fresh leaf.
    pub fn bind(&self, name: &str, var: Var<F>) {
        self.leaves.borrow_mut().insert(name.to_string(), var);
    }

    pub fn push_buffer_update(&self, name: &str, value: Tensor<F>) {
        self.buffer_updates.borrow_mut().push((name.to_string(), value));
    }

    pub fn take_buffer_updates(&self) -> Vec<(String, Tensor<F>)> {
        std::mem::take(&mut self.buffer_updates.borrow_mut())
    }

    /// Gradient tensors for every trainable parameter touched in this pass.
    pub fn param_grads(&self, grads: &Gradients<F>) -> HashMap<String, Tensor<F>> {
        self.leaves
            .borrow()
            .iter()
            .filter(|(_, v)| v.requires_grad())
            .map(|(name, v)| (name.clone(), grads.tensor(v)))
            .collect()
    }

    /// Leaf variables for trainable parameters, by name.
    pub fn param_vars(&self) -> Vec<(String, Var<F>)> {
        let mut v: Vec<_> = self
            .leaves
            .borrow()
            .iter()
            .filter(|(_, v)| v.requires_grad())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

pub fn apply_buffer_updates<F: Float>(m: &mut dyn Module<F>, updates: Vec<(String, Tensor<F>)>) {
    let map: HashMap<String, Tensor<F>> = updates.into_iter().collect();
    m.visit_mut(&mut |p| {
        if !p.trainable {
            if let Some(v) = map.get(&p.name) {
                p.value = v.clone();
            }
        }
    });
}

fn init_kernel<F: Float>(shape: &[usize], rng: &mut impl Rng) -> Tensor<F> {
    Tensor::randn(shape, INIT_STD, rng)
}

fn channel_view(c: usize) -> [usize; 5] {
    [1, c, 1, 1, 1]
}

#[derive(Clone, Debug)]
pub struct Conv<F: Float> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub geom: ConvGeom,
}

impl<F: Float> Conv<F> {
    pub fn new(name: &str, cin: usize, cout: usize, geom: ConvGeom, rng: &mut impl Rng) -> Self {
        let [a, b, c] = geom.kernel;
        Conv {
            weight: Param::new(format!("{name}.weight"), init_kernel(&[cout, cin, a, b, c], rng)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            geom,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn forward(&self, ctx: &Ctx<F>, x: &Var<F>) -> Var<F> {
        let y = conv(x, &ctx.var(&self.weight), &self.geom);
        y.add(&ctx.var(&self.bias).reshape(&channel_view(self.out_channels())))
    }
}

impl<F: Float> Module<F> for Conv<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Transposed convolution; weight stored as `(C_in, C_out, k)`.
#[derive(Clone, Debug)]
pub struct ConvTranspose<F: Float> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub geom: ConvGeom,
}

impl<F: Float> ConvTranspose<F> {
    pub fn new(name: &str, cin: usize, cout: usize, geom: ConvGeom, rng: &mut impl Rng) -> Self {
        let [a, b, c] = geom.kernel;
        ConvTranspose {
            weight: Param::new(format!("{name}.weight"), init_kernel(&[cin, cout, a, b, c], rng)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
            geom,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_dims(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        self.geom.transpose_out(input)
    }

    pub fn forward(&self, ctx: &Ctx<F>, x: &Var<F>) -> Var<F> {
        let s = x.shape();
        let din = self
            .out_dims([s[2], s[3], s[4]])
            .expect("transposed convolution output extent");
        let y = conv_transpose(x, &ctx.var(&self.weight), &self.geom, din);
        y.add(&ctx.var(&self.bias).reshape(&channel_view(self.out_channels())))
    }
}

impl<F: Float> Module<F> for ConvTranspose<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// `y = x Wᵀ + b` with `W: (out, in)`.
#[derive(Clone, Debug)]
pub struct Linear<F: Float> {
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Float> Linear<F> {
    pub fn new(name: &str, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), init_kernel(&[cout, cin], rng)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }

    pub fn forward(&self, ctx: &Ctx<F>, x: &Var<F>) -> Var<F> {
        x.matmul(&ctx.var(&self.weight).t()).add(&ctx.var(&self.bias))
    }
}

impl<F: Float> Module<F> for Linear<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Per-channel batch normalization over `(N, D, H, W)`.
#[derive(Clone, Debug)]
pub struct BatchNorm<F: Float> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Param<F>,
    pub running_var: Param<F>,
}

impl<F: Float> BatchNorm<F> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Param::buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: Param::buffer(format!("{name}.running_var"), Tensor::ones(&[channels])),
        }
    }

    pub fn forward(&self, ctx: &Ctx<F>, x: &Var<F>) -> Var<F> {
        let c = x.shape()[1];
        let view = channel_view(c);
        let axes = [0, 2, 3, 4];
        let normalized = match ctx.mode() {
            Mode::Train => {
                let mean = x.mean_axes(&axes);
                let centered = x.sub(&mean);
                let var = centered.square().mean_axes(&axes);
                self.record_running(ctx, mean.value(), var.value(), x.value().numel() / c);
                centered.div(&var.add_scalar(NORM_EPS).sqrt())
            }
            Mode::Eval => {
                let mean = Var::constant(self.running_mean.value.reshape(&view));
                let std = Var::constant(
                    self.running_var
                        .value
                        .map(|v| (v + crate::tensor::cast(NORM_EPS)).sqrt())
                        .reshape(&view),
                );
                x.sub(&mean).div(&std)
            }
        };
        normalized
            .mul(&ctx.var(&self.gamma).reshape(&view))
            .add(&ctx.var(&self.beta).reshape(&view))
    }

    fn record_running(&self, ctx: &Ctx<F>, mean: &Tensor<F>, var: &Tensor<F>, count: usize) {
        let m: F = crate::tensor::cast(BN_MOMENTUM);
        let one = F::one();
        let unbias: F = crate::tensor::cast(count as f64 / (count.max(2) - 1) as f64);
        let c = mean.numel();
        let mean = mean.reshape(&[c]);
        let var = var.reshape(&[c]);
        let rm = self
            .running_mean
            .value
            .zip_map(&mean, |r, b| (one - m) * r + m * b);
        let rv = self
            .running_var
            .value
            .zip_map(&var, |r, b| (one - m) * r + m * b * unbias);
        ctx.push_buffer_update(&self.running_mean.name, rm);
        ctx.push_buffer_update(&self.running_var.name, rv);
    }
}

impl<F: Float> Module<F> for BatchNorm<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

/// Per-sample normalization over all of `(C, D, H, W)` with a per-channel affine.
/// Stateless, so samples never interact.
#[derive(Clone, Debug)]
pub struct LayerNorm<F: Float> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
}

impl<F: Float> LayerNorm<F> {
    pub fn new(name: &str, channels: usize) -> Self {
        LayerNorm {
            gamma: Param::new(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
        }
    }

    pub fn forward(&self, ctx: &Ctx<F>, x: &Var<F>) -> Var<F> {
        let view = channel_view(x.shape()[1]);
        let axes = [1, 2, 3, 4];
        let mean = x.mean_axes(&axes);
        let centered = x.sub(&mean);
        let var = centered.square().mean_axes(&axes);
        centered
            .div(&var.add_scalar(NORM_EPS).sqrt())
            .mul(&ctx.var(&self.gamma).reshape(&view))
            .add(&ctx.var(&self.beta).reshape(&view))
    }
}

impl<F: Float> Module<F> for LayerNorm<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.gamma);
        f(&self.beta);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}
