use alloc::vec;
use alloc::vec::Vec;

use super::encoding::{encoded_len, positional_encode_rows};
use crate::autodiff::{matmul_nn_acc, Tape, Tensor, Var};
use crate::fmath;
use crate::nn::Linear;
use crate::rng::Rng;

/// Network size preset. The lightweight variant trades a little quality
/// for a much smaller per-intersection cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlpPreset {
    Full,
    Lightweight,
}

impl MlpPreset {
    fn trunk_widths(self) -> (usize, usize) {
        match self {
            MlpPreset::Full => (4, 128),
            MlpPreset::Lightweight => (2, 64),
        }
    }

    fn color_widths(self) -> (usize, usize) {
        match self {
            MlpPreset::Full => (2, 64),
            MlpPreset::Lightweight => (1, 32),
        }
    }
}

/// The per-intersection radiance function. The trunk and opacity head see
/// only the (encoded) interpolated feature, so opacity is view-independent
/// by construction; the view factor joins at the color branch.
#[derive(Clone, Debug)]
pub struct RadianceMlp {
    pub trunk: Vec<Linear>,
    pub opacity: Linear,
    pub color_hidden: Vec<Linear>,
    pub color_out: Linear,
    pub preset: MlpPreset,
    pub feature_dim: usize,
    /// Positional-encoding frequency applied to the feature input
    /// (0 disables encoding).
    pub feature_pe_freq: usize,
    /// Same for the view factor (normal, direction).
    pub view_pe_freq: usize,
}

impl RadianceMlp {
    pub fn init(
        preset: MlpPreset,
        feature_dim: usize,
        feature_pe_freq: usize,
        view_pe_freq: usize,
        rng: &mut Rng,
    ) -> Self {
        let (trunk_layers, trunk_w) = preset.trunk_widths();
        let (color_layers, color_w) = preset.color_widths();
        let f_in = encoded_len(feature_dim, feature_pe_freq);
        let g_in = encoded_len(6, view_pe_freq);

        let mut trunk = Vec::with_capacity(trunk_layers);
        let mut prev = f_in;
        for _ in 0..trunk_layers {
            trunk.push(Linear::init(prev, trunk_w, rng));
            prev = trunk_w;
        }
        let opacity = Linear::init(trunk_w, 1, rng);

        let mut color_hidden = Vec::with_capacity(color_layers);
        let mut cprev = trunk_w + g_in;
        for _ in 0..color_layers {
            color_hidden.push(Linear::init(cprev, color_w, rng));
            cprev = color_w;
        }
        let color_out = Linear::init(cprev, 3, rng);

        RadianceMlp {
            trunk,
            opacity,
            color_hidden,
            color_out,
            preset,
            feature_dim,
            feature_pe_freq,
            view_pe_freq,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.trunk {
            out.push(&l.w);
            out.push(&l.b);
        }
        out.push(&self.opacity.w);
        out.push(&self.opacity.b);
        for l in &self.color_hidden {
            out.push(&l.w);
            out.push(&l.b);
        }
        out.push(&self.color_out.w);
        out.push(&self.color_out.b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.trunk.iter_mut() {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.opacity.w);
        out.push(&mut self.opacity.b);
        for l in self.color_hidden.iter_mut() {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.color_out.w);
        out.push(&mut self.color_out.b);
        out
    }

    /// `(name, shape)` per parameter, used by checkpoint formats to reject
    /// weights from a different preset.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|p| p.shape.clone()).collect()
    }

    /// Tape forward over a batch of intersections. `leaves` follows the
    /// `params()` order; `features` is `[K, feature_dim]`; `view` is
    /// `[K, 6]` (unit normal, unit ray direction). Returns
    /// `(alpha [K,1], rgb [K,3])`, both in (0,1).
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        leaves: &[Var],
        features: Var,
        view: Var,
    ) -> (Var, Var) {
        assert_eq!(leaves.len(), 2 * (self.trunk.len() + 1 + self.color_hidden.len() + 1));
        let mut h = tape.positional_encode(features, self.feature_pe_freq);
        let mut li = 0;
        for _ in &self.trunk {
            h = tape.linear(h, leaves[li], leaves[li + 1]);
            h = tape.relu(h);
            li += 2;
        }
        let alpha_logit = tape.linear(h, leaves[li], leaves[li + 1]);
        li += 2;
        let alpha = tape.sigmoid(alpha_logit);

        let g = tape.positional_encode(view, self.view_pe_freq);
        let mut c = tape.concat_cols(h, g);
        for _ in &self.color_hidden {
            c = tape.linear(c, leaves[li], leaves[li + 1]);
            c = tape.relu(c);
            li += 2;
        }
        let rgb_logit = tape.linear(c, leaves[li], leaves[li + 1]);
        let rgb = tape.sigmoid(rgb_logit);
        (alpha, rgb)
    }

    /// Plain-value forward for rendering. Mirrors `forward_with` kernel for
    /// kernel so the two paths produce identical bits.
    pub fn eval_batch(&self, features: &[f64], view: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
        if k == 0 {
            return (Vec::new(), Vec::new());
        }
        assert_eq!(features.len(), k * self.feature_dim);
        assert_eq!(view.len(), k * 6);

        let mut h = positional_encode_rows(features, k, self.feature_dim, self.feature_pe_freq);
        let mut width = encoded_len(self.feature_dim, self.feature_pe_freq);
        for l in &self.trunk {
            h = linear_relu(&h, k, width, l, true);
            width = l.fan_out();
        }
        let alpha: Vec<f64> = linear_relu(&h, k, width, &self.opacity, false)
            .iter()
            .map(|&x| fmath::sigmoid(x))
            .collect();

        let g = positional_encode_rows(view, k, 6, self.view_pe_freq);
        let g_w = encoded_len(6, self.view_pe_freq);
        let mut c = concat_rows(&h, width, &g, g_w, k);
        let mut c_w = width + g_w;
        for l in &self.color_hidden {
            c = linear_relu(&c, k, c_w, l, true);
            c_w = l.fan_out();
        }
        let rgb: Vec<f64> = linear_relu(&c, k, c_w, &self.color_out, false)
            .iter()
            .map(|&x| fmath::sigmoid(x))
            .collect();
        (alpha, rgb)
    }

    /// Single-intersection convenience: `(rgb, alpha)` for one feature and
    /// one view factor.
    pub fn eval_one(&self, feature: &[f64], normal: &[f64; 3], dir: &[f64; 3]) -> ([f64; 3], f64) {
        let view = [normal[0], normal[1], normal[2], dir[0], dir[1], dir[2]];
        let (alpha, rgb) = self.eval_batch(feature, &view, 1);
        ([rgb[0], rgb[1], rgb[2]], alpha[0])
    }
}

fn linear_relu(x: &[f64], k: usize, width: usize, l: &Linear, relu: bool) -> Vec<f64> {
    let out_w = l.fan_out();
    assert_eq!(width, l.fan_in(), "layer width mismatch");
    let mut out = vec![0.0; k * out_w];
    matmul_nn_acc(x, &l.w.data, k, width, out_w, &mut out);
    for row in out.chunks_exact_mut(out_w) {
        for (o, b) in row.iter_mut().zip(&l.b.data) {
            *o += b;
        }
    }
    if relu {
        for o in out.iter_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
    }
    out
}

fn concat_rows(a: &[f64], aw: usize, b: &[f64], bw: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k * (aw + bw));
    for r in 0..k {
        out.extend_from_slice(&a[r * aw..(r + 1) * aw]);
        out.extend_from_slice(&b[r * bw..(r + 1) * bw]);
    }
    out
}
