//! Adam optimizer with bias correction. Moment buffers are keyed by
//! parameter name so state survives parameter tensor replacement.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::tensor::Gradients;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    m: HashMap<String, Vec<f32>>,
    v: HashMap<String, Vec<f32>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> AdamState {
        AdamState {
            cfg,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over `params` using gradients from one backward
    /// pass. Every parameter must have a gradient.
    pub fn step(
        &mut self,
        params: &mut [&mut Parameter],
        grads: &Gradients,
        lr: f32,
    ) -> Result<()> {
        for p in params.iter() {
            if !grads.contains(p.tensor()) {
                return Err(Error::invalid(format!(
                    "adam_step: no gradient for parameter {}",
                    p.name()
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let b1 = self.cfg.beta1 as f64;
        let b2 = self.cfg.beta2 as f64;
        let bias1 = 1.0 - b1.powf(t);
        let bias2 = 1.0 - b2.powf(t);

        for p in params.iter_mut() {
            let g = grads.get(p.tensor()).expect("checked above");
            let n = g.len();
            let m = self
                .m
                .entry(p.name().to_string())
                .or_insert_with(|| vec![0.0; n]);
            let v = self
                .v
                .entry(p.name().to_string())
                .or_insert_with(|| vec![0.0; n]);
            if m.len() != n || v.len() != n {
                return Err(Error::shape(
                    "adam_step",
                    format!("moment size mismatch for parameter {}", p.name()),
                ));
            }
            let mut data = p.tensor().data().to_vec();
            for i in 0..n {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] as f64 / bias1;
                let v_hat = v[i] as f64 / bias2;
                data[i] -= (lr as f64 * m_hat / (v_hat.sqrt() + self.cfg.eps as f64)) as f32;
            }
            p.set_data(data)?;
        }
        Ok(())
    }
}
