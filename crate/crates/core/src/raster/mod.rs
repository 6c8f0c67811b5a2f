//! Rendering geometry: cameras, ray-triangle intersection, a median-split
//! BVH, and a full-frame z-buffer depth pass.
//!
//! Per-ray BVH casting is the semantic primitive. The z-buffer pass is a
//! screen-binned accelerator that runs the *same* intersection code per
//! candidate pixel, so covered-pixel depths agree with ray casting to the
//! bit. Back faces are kept: primitives are enclosed, so a ray legitimately
//! exits through one; opacity learning decides what contributes.

mod bvh;
mod camera;
mod depth;

pub use bvh::{brute_force_hits, build_bvh, Bvh, FaceRef, Hit};
pub use camera::{Camera, CameraError};
pub use depth::{rasterize_depth, DepthPass, PixelFace};

use crate::autodiff::{Tape, Var};
use crate::fmath;

/// Rays start a hair in front of their origin to avoid self-intersection.
pub const T_NEAR: f64 = 1e-4;

/// Barycentric interpolation of per-vertex attributes at one intersection:
/// `bary [1,3] x attrs [3,C] -> [1,C]`, differentiable in both inputs.
pub fn interpolate_attributes(tape: &mut Tape, attrs: Var, bary: Var) -> Var {
    assert_eq!(tape.shape(bary), &[1, 3], "bary must be [1,3] on the simplex");
    assert_eq!(tape.shape(attrs)[0], 3, "attrs must be [3,C]");
    tape.matmul(bary, attrs)
}

/// Watertight-enough Moeller-Trumbore. Returns `(t, u, v)` with barycentric
/// weights `(1-u-v, u, v)` on the face's three vertices. Every caller in
/// the crate (brute force, BVH, z-buffer) funnels through this one function
/// so hit decisions are bit-identical everywhere.
pub fn moller_trumbore(
    origin: &[f64; 3],
    dir: &[f64; 3],
    v0: &[f64; 3],
    v1: &[f64; 3],
    v2: &[f64; 3],
    t_near: f64,
) -> Option<(f64, f64, f64)> {
    let e1 = [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]];
    let p = fmath::cross3(dir, &e2);
    let det = fmath::dot3(&e1, &p);
    if fmath::abs(det) < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = [origin[0] - v0[0], origin[1] - v0[1], origin[2] - v0[2]];
    let u = fmath::dot3(&s, &p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = fmath::cross3(&s, &e1);
    let v = fmath::dot3(dir, &q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = fmath::dot3(&e2, &q) * inv;
    if t <= t_near {
        return None;
    }
    Some((t, u, v))
}
