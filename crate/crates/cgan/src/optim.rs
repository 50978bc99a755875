//! Adam over the trainable variables of a store, with checkpointable moments.

use tch::nn::VarStore;
use tch::Tensor;

use crate::config::AdamConfig;

#[derive(Debug)]
pub struct Adam {
    config: AdamConfig,
    /// Trainable variables sorted by name.
    params: Vec<(String, Tensor)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(vs: &VarStore, config: AdamConfig) -> Self {
        let mut params: Vec<(String, Tensor)> = vs
            .variables()
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .collect();
        params.sort_by(|a, b| a.0.cmp(&b.0));
        let m = params.iter().map(|(_, p)| p.zeros_like().detach()).collect();
        let v = params.iter().map(|(_, p)| p.zeros_like().detach()).collect();
        Self {
            config,
            params,
            m,
            v,
            step: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in &mut self.params {
            p.zero_grad();
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`. Variables without a gradient keep their moments.
    pub fn step(&mut self, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        tch::no_grad(|| {
            for ((_, p), (m, v)) in self.params.iter_mut().zip(self.m.iter_mut().zip(&mut self.v)) {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                *m = &*m * beta1 + &g * (1.0 - beta1);
                *v = &*v * beta2 + g.square() * (1.0 - beta2);
                let denom = (&*v / bc2).sqrt() + eps;
                let update = (&*m / bc1) / denom * lr;
                let _ = p.g_sub_(&update);
            }
        });
    }

    /// Named moment tensors, `m/<var>` and `v/<var>`.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.params.len());
        for ((name, _), m) in self.params.iter().zip(&self.m) {
            out.push((format!("m/{name}"), m.shallow_clone()));
        }
        for ((name, _), v) in self.params.iter().zip(&self.v) {
            out.push((format!("v/{name}"), v.shallow_clone()));
        }
        out
    }

    /// Restores moments and the step counter; `lookup` yields a tensor by state name.
    pub fn restore(
        &mut self,
        step: u64,
        mut lookup: impl FnMut(&str) -> Option<Tensor>,
    ) -> Result<(), String> {
        for ((name, p), (m, v)) in self.params.iter().zip(self.m.iter_mut().zip(&mut self.v)) {
            for (prefix, slot) in [("m", &mut *m), ("v", &mut *v)] {
                let key = format!("{prefix}/{name}");
                let t = lookup(&key).ok_or_else(|| format!("missing optimizer state {key}"))?;
                if t.size() != p.size() {
                    return Err(format!("optimizer state {key} has shape {:?}", t.size()));
                }
                *slot = t.to_kind(p.kind()).to_device(p.device()).detach();
            }
        }
        self.step = step;
        Ok(())
    }

    pub fn parameters(&self) -> &[(String, Tensor)] {
        &self.params
    }
}
