use alloc::vec::Vec;

use crate::fmath;

/// Output length of the positional encoding: `k + 2 k freq`.
pub fn encoded_len(k: usize, freq: usize) -> usize {
    k + 2 * k * freq
}

/// Plain-value positional encoding with the same block layout as
/// `Tape::positional_encode`: `[x | sin(2^0 pi x) | cos(2^0 pi x) | ...]`.
/// `freq = 0` returns the input unchanged.
pub fn positional_encode_vec(x: &[f64], freq: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(x.len(), freq));
    out.extend_from_slice(x);
    let mut scale = core::f64::consts::PI;
    for _ in 0..freq {
        for &v in x {
            out.push(fmath::sin(scale * v));
        }
        for &v in x {
            out.push(fmath::cos(scale * v));
        }
        scale *= 2.0;
    }
    out
}

/// Row-wise positional encoding of a `[rows, cols]` matrix, matching the
/// tape layout per row.
pub fn positional_encode_rows(data: &[f64], rows: usize, cols: usize, freq: usize) -> Vec<f64> {
    let out_cols = encoded_len(cols, freq);
    let mut out = Vec::with_capacity(rows * out_cols);
    for r in 0..rows {
        out.extend(positional_encode_vec(&data[r * cols..(r + 1) * cols], freq));
    }
    out
}
