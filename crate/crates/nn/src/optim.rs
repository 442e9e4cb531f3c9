//! AdamW with decoupled weight decay, matching the PyTorch update order.

use avocodo_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 0.002, beta1: 0.8, beta2: 0.99, eps: 1e-8, weight_decay: 0.01, lr_decay: 0.999 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.eps > 0.0 && self.weight_decay >= 0.0) {
            return config_err("learning rate and epsilon must be positive, weight decay nonnegative");
        }
        if !unit(self.beta1) || !unit(self.beta2) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return config_err("betas must lie in [0, 1) and the decay in (0, 1]");
        }
        Ok(())
    }

    /// `lr₀ · decay^epoch`.
    pub fn lr_at(&self, epoch: u64) -> f64 {
        self.lr * self.lr_decay.powf(epoch as f64)
    }
}

/// First and second moments per parameter plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![T::zero(); p.value.numel()]).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    /// One update at learning rate `lr`; `grads` follows the store order.
    pub fn update(&mut self, store: &mut ParamStore<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return config_err(format!("{} gradients for {} parameters", grads.len(), store.len()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let decay = T::lit(1.0 - lr * c.weight_decay);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (ob1, ob2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(lr / (1.0 - c.beta1.powf(t)));
        let bc2_sqrt = T::lit((1.0 - c.beta2.powf(t)).sqrt());
        let eps = T::lit(c.eps);
        for (i, param) in store.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            if g.len() != m.len() {
                return config_err(format!("gradient of {} has {} entries", param.name, g.len()));
            }
            for (j, p) in param.value.data_mut().iter_mut().enumerate() {
                *p *= decay;
                m[j] = b1 * m[j] + ob1 * g[j];
                v[j] = b2 * v[j] + ob2 * g[j] * g[j];
                let denom = v[j].sqrt() / bc2_sqrt + eps;
                *p -= step_size * m[j] / denom;
            }
        }
        Ok(())
    }
}
