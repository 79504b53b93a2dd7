use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-5,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over named parameters. Moment estimates are kept in
/// `f64` and stored by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one update to every trainable parameter that has a gradient.
    /// Parameters without a gradient entry are left untouched.
    pub fn update(&mut self, module: &mut dyn Module<f32>, grads: &HashMap<String, Tensor<f32>>) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (ms, vs) = (&mut self.m, &mut self.v);
        module.visit_mut(&mut |p| {
            if !p.trainable {
                return;
            }
            let Some(g) = grads.get(&p.name) else {
                return;
            };
            let n = p.value.numel();
            let m = ms.entry(p.name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = vs.entry(p.name.clone()).or_insert_with(|| vec![0.0; n]);
            let mut w = p.value.to_vec();
            for i in 0..n {
                let gi = g.data()[i] as f64;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                w[i] = (w[i] as f64 - lr * mh / (vh.sqrt() + eps)) as f32;
            }
            p.value = Tensor::from_vec(p.value.shape(), w);
        });
        Ok(())
    }
}
