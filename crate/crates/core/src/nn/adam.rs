use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tch::{nn::VarStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam whose moment estimates can be checkpointed alongside the weights,
/// so an interrupted run resumes on the exact same trajectory.
pub struct Adam {
    cfg: AdamConfig,
    lr: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(vs: &VarStore, cfg: AdamConfig) -> Self {
        let moments = vs
            .variables()
            .into_iter()
            .map(|(name, v)| (name, (v.zeros_like(), v.zeros_like())))
            .collect();
        Self { cfg, lr: cfg.lr, step: 0, moments }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&self, vs: &VarStore) {
        for var in vs.variables().values() {
            let mut g = var.grad();
            if g.defined() {
                let _ = g.detach_().zero_();
            }
        }
    }

    /// Applies one update from the gradients currently stored on `vs`, then
    /// clears them.
    pub fn step(&mut self, vs: &VarStore) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let vars = vs.variables();
        tch::no_grad(|| {
            for (name, (m, v)) in self.moments.iter_mut() {
                let var = &vars[name];
                let g = var.grad();
                if !g.defined() {
                    continue;
                }
                let _ = m.g_mul_scalar_(beta1).g_add_(&(&g * (1.0 - beta1)));
                let _ = v.g_mul_scalar_(beta2).g_add_(&(&g * &g * (1.0 - beta2)));
                let update = (&*m / bc1) / ((&*v / bc2).sqrt() + eps) * self.lr;
                let _ = var.shallow_clone().g_sub_(&update);
            }
        });
        self.zero_grad(vs);
    }

    /// Moment tensors keyed `adam.m.<var>` / `adam.v.<var>`.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(self.moments.len() * 2);
        for (name, (m, v)) in &self.moments {
            out.push((format!("adam.m.{name}"), m.shallow_clone()));
            out.push((format!("adam.v.{name}"), v.shallow_clone()));
        }
        out
    }

    pub fn restore(&mut self, step: u64, lr: f64, tensors: &BTreeMap<String, Tensor>) -> crate::Result<()> {
        for (name, (m, v)) in self.moments.iter_mut() {
            for (prefix, dst) in [("adam.m.", &mut *m), ("adam.v.", &mut *v)] {
                let key = format!("{prefix}{name}");
                let src = tensors
                    .get(&key)
                    .ok_or_else(|| crate::Error::Checkpoint(format!("missing optimizer tensor {key}")))?;
                tch::no_grad(|| dst.copy_(&src.to_kind(dst.kind())));
            }
        }
        self.step = step;
        self.lr = lr;
        Ok(())
    }
}
