use serde::{Deserialize, Serialize};

use super::Tensor;

/// Applies one update to `params` from `grads`.
///
/// A `None` gradient or a `true` entry in `frozen` leaves that tensor, and any
/// optimizer state attached to it, untouched.
pub trait Optimizer {
    fn step(&mut self, params: &mut [Tensor], grads: &[Option<Vec<f64>>], frozen: &[bool]);
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [Tensor], grads: &[Option<Vec<f64>>], frozen: &[bool]) {
        for ((p, g), &fz) in params.iter_mut().zip(grads).zip(frozen) {
            let Some(g) = g else { continue };
            if fz {
                continue;
            }
            for (w, d) in p.data_mut().iter_mut().zip(g) {
                *w -= self.lr * d;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Step counts are kept per tensor so a tensor
/// that was frozen starts its own correction schedule when it thaws.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: Vec<u64>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Adam {
        Adam {
            config,
            first: Vec::new(),
            second: Vec::new(),
            steps: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [Tensor], grads: &[Option<Vec<f64>>], frozen: &[bool]) {
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.steps = vec![0; params.len()];
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if frozen[idx] {
                continue;
            }
            self.steps[idx] += 1;
            let t = self.steps[idx] as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let (m, v) = (&mut self.first[idx], &mut self.second[idx]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
