//! AdamW with decoupled weight decay and a linear warmup / linear decay
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub warmup_proportion: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            warmup_proportion: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    /// Completed optimizer steps.
    pub step: u64,
    pub total_steps: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore, total_steps: u64) -> Self {
        AdamW {
            config,
            step: 0,
            total_steps,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Learning rate for 1-based step `t`: ramps linearly from 0 to `lr` over
    /// the first `warmup_proportion * total_steps` steps, then linearly back
    /// to 0 at `total_steps`.
    pub fn lr_at(&self, t: u64) -> f64 {
        let base = self.config.lr;
        let total = self.total_steps as f64;
        let warmup = self.config.warmup_proportion * total;
        let t = t as f64;
        if t < warmup {
            base * t / warmup
        } else if total > warmup {
            base * ((total - t) / (total - warmup)).max(0.0)
        } else {
            base
        }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Applies one update. Frozen parameters are skipped. Fails without
    /// touching anything if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape(
                "adamw",
                format!("{} gradients for {} parameters", grads.len(), params.len()),
            ));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::shape(
                    "adamw",
                    format!(
                        "gradient {:?} for {} {:?}",
                        g.shape(),
                        params.name(id),
                        params.get(id).shape()
                    ),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", params.name(id))));
            }
        }

        self.step += 1;
        let t = self.step;
        let lr = self.lr_at(t);
        let AdamWConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if params.is_frozen(id) {
                continue;
            }
            let i = id.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.get_mut(id).data_mut();
            for (((pj, &gj), mj), vj) in p
                .iter_mut()
                .zip(grads[i].data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                let m_hat = *mj / bc1;
                let v_hat = *vj / bc2;
                *pj -= lr * (m_hat / (v_hat.sqrt() + epsilon) + weight_decay * *pj);
            }
        }
        Ok(())
    }
}
