//! The latent shape space: a permutation-invariant point encoder, a decoder
//! from unit-norm 8-dim codes to ordered mesh vertices, a procedural
//! local-structure patch database, and autoencoder training.
//!
//! The decoder predicts per-vertex offsets from the sphere template and its
//! final layer starts at zero, so an untrained primitive is exactly the
//! template sphere. Scene fitting later optimizes codes directly; the
//! encoder only exists to pretrain the latent space.

mod patches;
mod train;

pub use patches::{generate_patch_database, PatchDatabase, PatchEntry, PatchFamily};
pub use train::{train_autoencoder, CodecTrainConfig, CodecTrainOutcome};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{Tape, Tensor, Var};
use crate::fmath;
use crate::mesh::TriangleMesh;
use crate::nn::Linear;
use crate::rng::Rng;

pub const LATENT_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum CodecError {
    /// Latent code norm is not 1; callers must project before decoding.
    NonUnitLatent { norm: f64 },
    EmptyPointSet,
    /// Autoencoder training hit a non-finite loss and restored the last
    /// good parameters.
    Diverged { epoch: usize },
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::NonUnitLatent { norm } => {
                write!(f, "latent code must be unit length (norm {})", norm)
            }
            CodecError::EmptyPointSet => write!(f, "encoder input is empty"),
            CodecError::Diverged { epoch } => {
                write!(f, "autoencoder training diverged at epoch {}", epoch)
            }
        }
    }
}

/// Shape decoder: 8 -> 128 -> 256 -> N*3 offsets from the template, relu
/// hidden activations, linear output, plus a linear bypass on the anchored
/// code difference. The output layer and the bypass start at zero.
///
/// The bypass matters for optimizability, not capacity: relu paths around
/// the anchor code can die during long training (nothing exercises them),
/// which would leave freshly initialized primitives with a zero Jacobian.
/// A linear term trains on every sample and cannot die.
#[derive(Clone, Debug)]
pub struct DecoderParams {
    pub l1: Linear,
    pub l2: Linear,
    pub out: Linear,
    pub skip: Tensor,
    pub vertex_count: usize,
}

impl DecoderParams {
    pub fn init(vertex_count: usize, rng: &mut Rng) -> Self {
        DecoderParams {
            l1: Linear::init(LATENT_DIM, 128, rng),
            l2: Linear::init(128, 256, rng),
            out: Linear::zeros(256, vertex_count * 3),
            skip: Tensor::zeros(vec![LATENT_DIM, vertex_count * 3]).with_grad(),
            vertex_count,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.l1.w, &self.l1.b, &self.l2.w, &self.l2.b, &self.out.w, &self.out.b, &self.skip]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.l1.w,
            &mut self.l1.b,
            &mut self.l2.w,
            &mut self.l2.b,
            &mut self.out.w,
            &mut self.out.b,
            &mut self.skip,
        ]
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in self.params_mut() {
            p.requires_grad = trainable;
            if trainable && p.grad.is_none() {
                p.grad = Some(vec![0.0; p.data.len()]);
            }
        }
    }

    /// Identical architecture and weights (used to reject incompatible
    /// primitive transplants between scenes).
    pub fn same_weights(&self, other: &DecoderParams) -> bool {
        self.vertex_count == other.vertex_count
            && self
                .params()
                .iter()
                .zip(other.params().iter())
                .all(|(a, b)| a.data == b.data)
    }
}

/// Decoder MLP over leaf vars laid out as `[w1, b1, w2, b2, w3, b3, skip]`.
/// Training passes register the leaves themselves so they can harvest
/// gradients; inference uses [`decode_offsets`].
///
/// The output is anchored at the canonical initial code: the raw value at
/// [`initial_latent`] is subtracted, so that code decodes to exactly zero
/// offsets (the sphere template) no matter what training did to the
/// weights. Primitives therefore always *start* as spheres that cover
/// their voxel, which is what makes depth gradients reach them at all.
pub fn decode_offsets_with(tape: &mut Tape, leaves: &[Var], codes: Var) -> Var {
    let l = tape.shape(codes)[0];
    let anchor_t = initial_latent();
    let anchor = tape.constant(anchor_t.shape.clone(), anchor_t.data.clone());
    let all = tape.stack_rows(&[codes, anchor]);

    let h = tape.linear(all, leaves[0], leaves[1]);
    let h = tape.relu(h);
    let h = tape.linear(h, leaves[2], leaves[3]);
    let h = tape.relu(h);
    let raw = tape.linear(h, leaves[4], leaves[5]);

    let main_rows: Vec<u32> = (0..l as u32).collect();
    let anchor_rows: Vec<u32> = core::iter::repeat(l as u32).take(l).collect();
    let main = tape.gather_rows(raw, &main_rows);
    let anchor_rep = tape.gather_rows(raw, &anchor_rows);
    let mlp_part = tape.sub(main, anchor_rep);

    let anchor_tiled: Vec<f64> =
        anchor_t.data.iter().copied().cycle().take(l * LATENT_DIM).collect();
    let anchor_rep_in = tape.constant(vec![l, LATENT_DIM], anchor_tiled);
    let centered = tape.sub(codes, anchor_rep_in);
    let skip_part = tape.matmul(centered, leaves[6]);
    tape.add(mlp_part, skip_part)
}

/// Per-latent offsets `[L, N*3]` for a batch of codes `[L, 8]`.
pub fn decode_offsets(tape: &mut Tape, dec: &DecoderParams, codes: Var) -> Var {
    let leaves = crate::autodiff::leaf_vars(tape, &dec.params(), true);
    decode_offsets_with(tape, &leaves, codes)
}

/// Decode one unit latent code into template-plus-offset vertices `[N,3]`.
/// Connectivity is never decoded; callers pair the result with the
/// template's faces.
pub fn decode_latent(
    tape: &mut Tape,
    dec: &DecoderParams,
    z: Var,
    template: &TriangleMesh,
) -> Result<Var, CodecError> {
    let zv = tape.value(z);
    let norm = fmath::sqrt(zv.iter().map(|x| x * x).sum());
    if fmath::abs(norm - 1.0) > 1e-6 {
        return Err(CodecError::NonUnitLatent { norm });
    }
    let n = template.vertex_count();
    assert_eq!(n, dec.vertex_count, "decoder was built for a different template");
    let offsets = decode_offsets(tape, dec, z);
    let offsets = tape.reshape(offsets, vec![n, 3]);
    let tmpl = tape.constant(vec![n, 3], template.vertices.data.clone());
    Ok(tape.add(tmpl, offsets))
}

/// Decode a latent tensor to a plain mesh (template connectivity).
pub fn decode_to_mesh(
    dec: &DecoderParams,
    z: &Tensor,
    template: &TriangleMesh,
) -> Result<TriangleMesh, CodecError> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.shape.clone(), z.data.clone());
    let verts = decode_latent(&mut tape, dec, zv, template)?;
    let t = Tensor::new(vec![template.vertex_count(), 3], tape.value(verts).to_vec());
    Ok(TriangleMesh::new(t, template.faces.clone()).expect("template connectivity is valid"))
}

/// Point encoder: shared per-point MLP 3 -> 64 -> 128, channel max-pool,
/// head 128 -> 8, unit normalization.
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub p1: Linear,
    pub p2: Linear,
    pub head: Linear,
}

impl EncoderParams {
    pub fn init(rng: &mut Rng) -> Self {
        EncoderParams {
            p1: Linear::init(3, 64, rng),
            p2: Linear::init(64, 128, rng),
            head: Linear::init(128, LATENT_DIM, rng),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.p1.w, &self.p1.b, &self.p2.w, &self.p2.b, &self.head.w, &self.head.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.p1.w,
            &mut self.p1.b,
            &mut self.p2.w,
            &mut self.p2.b,
            &mut self.head.w,
            &mut self.head.b,
        ]
    }
}

/// Encoder MLP over leaf vars `[w1, b1, w2, b2, wh, bh]`; see
/// [`decode_offsets_with`] for the layout convention.
pub fn encode_points_with(tape: &mut Tape, leaves: &[Var], points: Var) -> Var {
    let h = tape.linear(points, leaves[0], leaves[1]);
    let h = tape.relu(h);
    let h = tape.linear(h, leaves[2], leaves[3]);
    let h = tape.relu(h);
    let pooled = tape.col_max(h);
    let z = tape.linear(pooled, leaves[4], leaves[5]);
    tape.normalize_rows(z, 1e-30)
}

/// Permutation-invariant unit code `[1,8]` for a point set `[k,3]`.
pub fn encode_points(tape: &mut Tape, enc: &EncoderParams, points: Var) -> Result<Var, CodecError> {
    let shape = tape.shape(points);
    if shape[0] == 0 {
        return Err(CodecError::EmptyPointSet);
    }
    let leaves = crate::autodiff::leaf_vars(tape, &enc.params(), true);
    Ok(encode_points_with(tape, &leaves, points))
}

/// Encode a plain point tensor into a unit latent tensor `[1,8]`.
pub fn encode_patch(enc: &EncoderParams, points: &Tensor) -> Result<Tensor, CodecError> {
    let mut tape = Tape::new();
    let p = tape.constant(points.shape.clone(), points.data.clone());
    let z = encode_points(&mut tape, enc, p)?;
    Ok(Tensor::new(vec![1, LATENT_DIM], tape.value(z).to_vec()))
}

/// Project a latent tensor back onto the unit sphere in place.
pub fn project_unit(z: &mut Tensor) {
    let norm = fmath::sqrt(z.data.iter().map(|x| x * x).sum::<f64>());
    if norm > 0.0 {
        for x in z.data.iter_mut() {
            *x /= norm;
        }
    }
}

/// The canonical initial code: the first basis vector. The decoder anchors
/// its output here (see [`decode_offsets_with`]), so this code decodes to
/// the unmodified sphere template before *and* after codec training.
pub fn initial_latent() -> Tensor {
    let mut data = vec![0.0; LATENT_DIM];
    data[0] = 1.0;
    Tensor::new(vec![1, LATENT_DIM], data)
}
