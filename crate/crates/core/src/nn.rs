//! Shared building block for the small MLPs in the codec and radiance
//! modules.

use alloc::vec;

use crate::autodiff::Tensor;
use crate::fmath;
use crate::rng::Rng;

/// One fully-connected layer.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = fmath::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut w = vec![0.0; fan_in * fan_out];
        rng.fill_range(&mut w, -limit, limit);
        Linear {
            w: Tensor::new(vec![fan_in, fan_out], w).with_grad(),
            b: Tensor::zeros(vec![fan_out]).with_grad(),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            w: Tensor::zeros(vec![fan_in, fan_out]).with_grad(),
            b: Tensor::zeros(vec![fan_out]).with_grad(),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.shape[0]
    }

    pub fn fan_out(&self) -> usize {
        self.w.shape[1]
    }
}
