use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moments are indexed like the parameter store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }

    pub fn first_moment(&self, id: usize) -> &Tensor {
        &self.m[id]
    }

    pub fn second_moment(&self, id: usize) -> &Tensor {
        &self.v[id]
    }

    /// One update. Non-finite gradients abort before anything changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Shape(format!(
                "{} gradients and {} moment slots for {} parameters",
                grads.len(),
                self.m.len(),
                store.len()
            )));
        }
        for (id, g) in grads.iter().enumerate() {
            if g.shape() != store.value(id).shape() {
                return Err(Error::Shape(format!("gradient shape for `{}`", store.name(id))));
            }
            if !g.is_finite() {
                return Err(Error::Training(format!("non-finite gradient for `{}`", store.name(id))));
            }
        }
        self.step_count += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - beta2.powi(self.step_count as i32);
        for (id, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let p = store.value_mut(id);
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * gi;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                p.data_mut()[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(x));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(1.5);
        let mut opt = Adam::new(&s, AdamConfig::default());
        opt.step(&mut s, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(s.value(0).item(), 1.5);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn one_step_by_hand() {
        // t=1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2, update = lr g / (|g| + eps)
        let mut s = store(1.0);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut opt = Adam::new(&s, cfg);
        opt.step(&mut s, &[Tensor::scalar(2.0)]).unwrap();
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((s.value(0).item() - expected).abs() < 1e-15);
        assert!((opt.first_moment(0).item() - 0.2).abs() < 1e-15);
        assert!((opt.second_moment(0).item() - 0.004).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut s = store(0.0);
        let mut opt = Adam::new(&s, AdamConfig { lr: 1e-3, ..AdamConfig::default() });
        let mut prev = 0.0;
        for _ in 0..5000 {
            opt.step(&mut s, &[Tensor::scalar(-3.0)]).unwrap();
        }
        for _ in 0..3 {
            prev = s.value(0).item();
            opt.step(&mut s, &[Tensor::scalar(-3.0)]).unwrap();
        }
        assert!(((s.value(0).item() - prev) - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut s = store(1.0);
        let mut opt = Adam::new(&s, AdamConfig::default());
        assert!(matches!(opt.step(&mut s, &[Tensor::scalar(f64::NAN)]), Err(Error::Training(_))));
        assert_eq!(s.value(0).item(), 1.0);
        assert_eq!(opt.step_count, 0);
    }
}
