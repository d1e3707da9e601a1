//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::scalar::Real;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) decay applied directly to the weights,
    /// not mixed into the gradient moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

pub struct Adam<T: Real = f32> {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamSet<T>) -> Self {
        let m = params.iter().map(|(_, p)| vec![T::ZERO; p.numel()]).collect();
        let v = params.iter().map(|(_, p)| vec![T::ZERO; p.numel()]).collect();
        Self { cfg, t: 0, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients currently stored on `params`.
    /// Parameters without a gradient (unused in this step's graph) are
    /// skipped except for weight decay.
    pub fn step(&mut self, params: &ParamSet<T>) {
        assert_eq!(params.len(), self.m.len(), "optimizer/param set mismatch");
        self.t += 1;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let lr = T::from_f64(self.cfg.lr);
        let eps = T::from_f64(self.cfg.eps);
        let wd = T::from_f64(self.cfg.weight_decay);
        let bc1 = T::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));

        for (i, (_, p)) in params.iter().enumerate() {
            let mut vals = p.to_vec();
            if let Some(g) = p.grad() {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                for j in 0..vals.len() {
                    m[j] = b1 * m[j] + (T::ONE - b1) * g[j];
                    v[j] = b2 * v[j] + (T::ONE - b2) * g[j] * g[j];
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    vals[j] = vals[j] - lr * mhat / (vhat.sqrt() + eps) - lr * wd * vals[j];
                }
            } else if self.cfg.weight_decay != 0.0 {
                for val in &mut vals {
                    *val = *val - lr * wd * *val;
                }
            } else {
                continue;
            }
            p.set_data(&vals);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    /// One hand-computed Adam step: g=1 everywhere, so m_hat=1, v_hat=1 and
    /// the update is exactly -lr / (1 + eps) regardless of beta values.
    #[test]
    fn first_step_matches_hand_calculation() {
        let p = Tensor::<f64>::from_vec(&[1], vec![0.5]).requires_grad();
        let mut ps = ParamSet::new();
        ps.push("w", p.clone());
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &ps);

        p.sum_all().backward(); // d/dp = 1
        opt.step(&ps);

        let expected = 0.5 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.to_vec()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn quadratic_descends() {
        let p = Tensor::<f64>::from_vec(&[2], vec![3.0, -2.0]).requires_grad();
        let mut ps = ParamSet::new();
        ps.push("w", p.clone());
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            &ps,
        );
        let loss_of = |p: &Tensor<f64>| p.mul(p).sum_all();
        let start = loss_of(&p).item();
        for _ in 0..100 {
            ps.zero_grads();
            loss_of(&p).backward();
            opt.step(&ps);
        }
        let end = loss_of(&p).item();
        assert!(end < start * 0.05, "start {start} end {end}");
    }

    #[test]
    fn decoupled_decay_shrinks_unused_params() {
        let used = Tensor::<f64>::from_vec(&[1], vec![1.0]).requires_grad();
        let idle = Tensor::<f64>::from_vec(&[1], vec![1.0]).requires_grad();
        let mut ps = ParamSet::new();
        ps.push("used", used.clone());
        ps.push("idle", idle.clone());
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.1,
                weight_decay: 0.5,
                ..AdamConfig::default()
            },
            &ps,
        );
        ps.zero_grads();
        used.sum_all().backward();
        opt.step(&ps);
        // idle had no gradient but still decays by lr * wd * w = 0.05
        assert!((idle.to_vec()[0] - 0.95).abs() < 1e-12);
    }
}
