use alloc::vec;
use core::fmt;

use crate::autodiff::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub enum RadianceError {
    /// Hierarchy blending needs at least one level result.
    EmptyLevels,
}

impl fmt::Display for RadianceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadianceError::EmptyLevels => write!(f, "blend needs at least one hierarchy level"),
        }
    }
}

/// Front-to-back compositing of depth-sorted `(color, alpha)` pairs:
/// `color = sum_j T_j alpha_j c_j` with `T_1 = 1`,
/// `T_j = prod_{p<j}(1 - alpha_p)`, and `acc = sum_j T_j alpha_j`.
/// An empty list gives black with zero accumulation, which is exactly what
/// the hierarchy blend expects from a level a ray misses.
///
/// Tape version: each item is `(color [1,3], alpha [1,1])`.
pub fn composite(tape: &mut Tape, items: &[(Var, Var)], j: usize) -> (Var, Var) {
    assert!(items.len() <= j, "more intersections than the per-level budget");
    let mut color = tape.constant(vec![1, 3], vec![0.0; 3]);
    let mut acc = tape.constant(vec![1, 1], vec![0.0]);
    let mut trans = tape.constant(vec![1, 1], vec![1.0]);
    for &(c, a) in items {
        let w = tape.mul(trans, a);
        let wc = tape.mul_col_broadcast(c, w);
        color = tape.add(color, wc);
        acc = tape.add(acc, w);
        let remain = tape.affine(a, -1.0, 1.0);
        trans = tape.mul(trans, remain);
    }
    (color, acc)
}

/// Plain-value compositing, same recurrence and operation order as
/// [`composite`].
pub fn composite_vals(items: &[([f64; 3], f64)]) -> ([f64; 3], f64) {
    let mut color = [0.0; 3];
    let mut acc = 0.0;
    let mut trans = 1.0;
    for (c, a) in items {
        let w = trans * a;
        for k in 0..3 {
            color[k] += c[k] * w;
        }
        acc += w;
        trans *= 1.0 - a;
    }
    (color, acc)
}

/// Blend per-level results ordered finest to coarsest:
/// `C = C_1 + (1-A_1) C_2 + ... + prod_{s<S}(1-A_s) C_S`, then add the
/// background color weighted by the residual transmittance
/// `prod_s (1-A_s)`. A level with no intersections contributes
/// `(black, A = 0)` and passes everything through.
pub fn blend_hierarchies(
    tape: &mut Tape,
    levels: &[(Var, Var)],
    background: Var,
) -> Result<Var, RadianceError> {
    if levels.is_empty() {
        return Err(RadianceError::EmptyLevels);
    }
    let mut total = tape.constant(vec![1, 3], vec![0.0; 3]);
    let mut trans = tape.constant(vec![1, 1], vec![1.0]);
    for &(c, a) in levels {
        let wc = tape.mul_col_broadcast(c, trans);
        total = tape.add(total, wc);
        let remain = tape.affine(a, -1.0, 1.0);
        trans = tape.mul(trans, remain);
    }
    let bg = tape.mul_col_broadcast(background, trans);
    Ok(tape.add(total, bg))
}

/// Plain-value hierarchy blend; see [`blend_hierarchies`].
pub fn blend_vals(levels: &[([f64; 3], f64)], background: &[f64; 3]) -> Result<[f64; 3], RadianceError> {
    if levels.is_empty() {
        return Err(RadianceError::EmptyLevels);
    }
    let mut total = [0.0; 3];
    let mut trans = 1.0;
    for (c, a) in levels {
        for k in 0..3 {
            total[k] += c[k] * trans;
        }
        trans *= 1.0 - a;
    }
    for k in 0..3 {
        total[k] += background[k] * trans;
    }
    Ok(total)
}
