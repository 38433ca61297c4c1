use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(name, "must lie in (0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        Ok(())
    }
}

/// Adam moments for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `params` along `grads`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || !p.same_shape(g) {
                return Err(Error::Shape(format!(
                    "parameter {i}: shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (x, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]).unwrap();
        adam.step(&mut [&mut p], &[Tensor::vector(vec![0.0, 0.0])]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_a_sign_step() {
        // m̂ = g, v̂ = g², so the update is lr * g / (|g| + eps).
        let g = [0.5, -3.0, 1e-3];
        let mut p = Tensor::vector(vec![0.0; 3]);
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3), &[&p]).unwrap();
        adam.step(&mut [&mut p], &[Tensor::vector(g.to_vec())]).unwrap();
        for (x, gk) in p.data().iter().zip(g) {
            let expect = -1e-3 * gk / (gk.abs() + 1e-8);
            assert!((x - expect).abs() < 1e-15);
            assert!((x.abs() - 1e-3).abs() < 1e-7);
        }
    }

    #[test]
    fn converges_on_a_quadratic() {
        let target = 3.0;
        let mut p = Tensor::vector(vec![0.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.01), &[&p]).unwrap();
        let mut reached = None;
        for step in 0..2000 {
            let g = 2.0 * (p.data()[0] - target);
            adam.step(&mut [&mut p], &[Tensor::vector(vec![g])]).unwrap();
            if (p.data()[0] - target).abs() < 1e-6 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some(), "ended at {}", p.data()[0]);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let p = Tensor::vector(vec![0.0]);
        assert!(AdamState::new(AdamConfig { beta1: 1.0, ..Default::default() }, &[&p]).is_err());
        let mut q = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]).unwrap();
        assert!(adam.step(&mut [&mut q], &[Tensor::vector(vec![0.0, 1.0])]).is_err());
    }
}
