use alloc::vec;
use alloc::vec::Vec;

use super::{AdError, Tensor};
use crate::fmath;

/// Hyperparameters for the Adam update rule.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..AdamConfig::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam. Moment buffers are laid out per parameter in the
/// order of the first `step` call; later calls must pass the same parameters
/// in the same order.
pub struct Adam {
    pub cfg: AdamConfig,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, step_count: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update to every parameter and zero the gradients.
    /// Parameters without `requires_grad` are skipped; a trainable
    /// parameter with no populated gradient is an error.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), AdError> {
        if self.m.is_empty() {
            for p in params.iter() {
                self.m.push(vec![0.0; p.data.len()]);
                self.v.push(vec![0.0; p.data.len()]);
            }
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - fmath::powi(self.cfg.beta1, t);
        let bc2 = 1.0 - fmath::powi(self.cfg.beta2, t);

        for (i, p) in params.iter_mut().enumerate() {
            if !p.requires_grad {
                continue;
            }
            let grad = p.grad.as_ref().ok_or(AdError::MissingGrad)?;
            assert_eq!(grad.len(), p.data.len(), "gradient shape mismatch");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((x, g), mi), vi) in p.data.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * g;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * g * g;
                // A moment that decays for thousands of zero-grad steps
                // lands in denormal range, where x86 multiplies stall;
                // flush far below any meaningful scale.
                if fmath::abs(*mi) < 1e-300 {
                    *mi = 0.0;
                }
                if *vi < 1e-300 {
                    *vi = 0.0;
                }
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.cfg.lr * m_hat / (fmath::sqrt(v_hat) + self.cfg.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
