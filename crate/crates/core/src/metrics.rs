//! Image quality metrics over row-major RGB buffers with values in [0, 1].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    ShapeMismatch,
    /// SSIM needs images at least as large as its 11x11 window.
    TooSmall { width: usize, height: usize },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::ShapeMismatch => write!(f, "images have different shapes"),
            MetricError::TooSmall { width, height } => {
                write!(f, "image {}x{} is smaller than the SSIM window", width, height)
            }
        }
    }
}

/// Peak signal-to-noise ratio in dB for unit dynamic range:
/// `10 log10(1 / MSE)`. Identical images report `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricError::ShapeMismatch);
    }
    let mse: f64 =
        a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * fmath::log10(1.0 / mse))
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Standard single-scale SSIM on the luma channel (Rec. 601 weights),
/// 11x11 Gaussian window with sigma 1.5, dynamic range 1, averaged over
/// fully-interior window positions.
pub fn ssim(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64, MetricError> {
    if a.len() != b.len() || a.len() != width * height * 3 {
        return Err(MetricError::ShapeMismatch);
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(MetricError::TooSmall { width, height });
    }

    let la = luma(a);
    let lb = luma(b);
    let kernel = gaussian_kernel();

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let half = SSIM_WINDOW / 2;

    let mut total = 0.0;
    let mut count = 0usize;
    for cy in half..height - half {
        for cx in half..width - half {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wgt = kernel[ky * SSIM_WINDOW + kx];
                    let idx = (cy + ky - half) * width + (cx + kx - half);
                    let va = la[idx];
                    let vb = lb[idx];
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn luma(rgb: &[f64]) -> Vec<f64> {
    rgb.chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect()
}

fn gaussian_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = vec![0.0; SSIM_WINDOW * SSIM_WINDOW];
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dx = x as f64 - half;
            let dy = y as f64 - half;
            let v = fmath::exp(-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
            k[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}
