//! Finite-difference checks of every differentiable path that crosses a
//! module boundary: the geometric losses, the shape decoder, attribute
//! interpolation, the radiance MLP, and compositing.

use meshfield_core::autodiff::{grad_check, leaf_vars, Tape, Tensor};
use meshfield_core::codec::{decode_offsets_with, DecoderParams};
use meshfield_core::mesh::{build_icosphere, chamfer_distance, regularization_loss, TriangleMesh};
use meshfield_core::radiance::{composite, MlpPreset, RadianceMlp};
use meshfield_core::raster::interpolate_attributes;
use meshfield_core::rng::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

#[test]
fn chamfer_grad() {
    let mut rng = Rng::new(101);
    let mut a = vec![0.0; 18];
    let mut b = vec![0.0; 24];
    rng.fill_range(&mut a, -1.0, 1.0);
    rng.fill_range(&mut b, -1.0, 1.0);
    let x = Tensor::new(vec![6, 3], a);

    let err = grad_check(
        |t, v| {
            let other = t.constant(vec![8, 3], b.clone());
            chamfer_distance(t, v, other).unwrap()
        },
        &x,
        H,
    )
    .unwrap();
    assert!(err <= TOL, "chamfer rel error {}", err);
}

#[test]
fn regularizer_grad() {
    let template = build_icosphere(0).unwrap();
    let mut rng = Rng::new(102);
    let mut x = template.vertices.clone();
    for v in x.data.iter_mut() {
        *v += rng.range(-0.08, 0.08);
    }
    let faces = template.faces.clone();
    let conn = TriangleMesh::new(x.clone(), faces).unwrap();
    let err = grad_check(|t, v| regularization_loss(t, v, &conn, 0.1, 0.1), &x, H).unwrap();
    assert!(err <= TOL, "regularizer rel error {}", err);
}

#[test]
fn decode_latent_grad_through_chamfer() {
    // The exact gradient path scene shape fitting uses: z -> decoder ->
    // vertices -> chamfer against a fixed target.
    let template = build_icosphere(0).unwrap();
    let mut rng = Rng::new(103);
    let mut dec = DecoderParams::init(template.vertex_count(), &mut rng);
    rng.fill_range(&mut dec.out.w.data, -0.1, 0.1);
    dec.set_trainable(false);

    let mut target = vec![0.0; 30];
    rng.fill_range(&mut target, -1.0, 1.0);

    let mut z = Tensor::new(vec![1, 8], vec![0.0; 8]);
    rng.fill_range(&mut z.data, -1.0, 1.0);
    let norm: f64 = z.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    z.data.iter_mut().for_each(|x| *x /= norm);

    let n = template.vertex_count();
    let err = grad_check(
        |t, zv| {
            let leaves = leaf_vars(t, &dec.params(), false);
            let offsets = decode_offsets_with(t, &leaves, zv);
            let offsets = t.reshape(offsets, vec![n, 3]);
            let tmpl = t.constant(vec![n, 3], template.vertices.data.clone());
            let verts = t.add(tmpl, offsets);
            let tgt = t.constant(vec![10, 3], target.clone());
            chamfer_distance(t, verts, tgt).unwrap()
        },
        &z,
        H,
    )
    .unwrap();
    assert!(err <= TOL, "decode rel error {}", err);
}

#[test]
fn interpolation_grad_wrt_attrs_and_bary() {
    let mut rng = Rng::new(104);
    let mut attrs = vec![0.0; 3 * 5];
    rng.fill_range(&mut attrs, -1.0, 1.0);
    let bary = vec![0.2, 0.3, 0.5];

    // w.r.t. attributes.
    let xa = Tensor::new(vec![3, 5], attrs.clone());
    let err_a = grad_check(
        |t, v| {
            let b = t.constant(vec![1, 3], bary.clone());
            let out = interpolate_attributes(t, v, b);
            t.sum(out)
        },
        &xa,
        H,
    )
    .unwrap();
    assert!(err_a <= 1e-6, "attr rel error {}", err_a);

    // w.r.t. barycentric coordinates.
    let xb = Tensor::new(vec![1, 3], bary);
    let err_b = grad_check(
        |t, v| {
            let a = t.constant(vec![3, 5], attrs.clone());
            let out = interpolate_attributes(t, a, v);
            t.sum(out)
        },
        &xb,
        H,
    )
    .unwrap();
    assert!(err_b <= 1e-6, "bary rel error {}", err_b);
}

#[test]
fn radiance_mlp_grad_wrt_feature_and_params() {
    let mut rng = Rng::new(105);
    let mlp = RadianceMlp::init(MlpPreset::Lightweight, 21, 2, 2, &mut rng);
    let mut gamma = vec![0.0; 6];
    rng.fill_range(&mut gamma, -1.0, 1.0);

    // w.r.t. the interpolated feature.
    let mut f = vec![0.0; 21];
    rng.fill_range(&mut f, -1.0, 1.0);
    let xf = Tensor::new(vec![1, 21], f);
    let err_f = grad_check(
        |t, v| {
            let leaves = leaf_vars(t, &mlp.params(), false);
            let g = t.constant(vec![1, 6], gamma.clone());
            let (alpha, rgb) = mlp.forward_with(t, &leaves, v, g);
            let s = t.sum(rgb);
            let a = t.sum(alpha);
            t.add(s, a)
        },
        &xf,
        H,
    )
    .unwrap();
    assert!(err_f <= TOL, "feature rel error {}", err_f);

    // w.r.t. one weight matrix (the opacity head).
    let w = mlp.opacity.w.clone();
    let feature = xf.data.clone();
    let err_w = grad_check(
        |t, wv| {
            let mut leaves = leaf_vars(t, &mlp.params(), false);
            // Opacity head weight sits right after the trunk layers.
            let slot = 2 * mlp.trunk.len();
            leaves[slot] = wv;
            let fv = t.constant(vec![1, 21], feature.clone());
            let g = t.constant(vec![1, 6], gamma.clone());
            let (alpha, _) = mlp.forward_with(t, &leaves, fv, g);
            t.sum(alpha)
        },
        &w,
        H,
    )
    .unwrap();
    assert!(err_w <= TOL, "weight rel error {}", err_w);
}

#[test]
fn composite_grad_over_four_intersections() {
    // Gradient through Eq-style compositing of 4 intersections w.r.t. the
    // raw (color, alpha) inputs packed into one tensor.
    let mut rng = Rng::new(106);
    let mut packed = vec![0.0; 16];
    rng.fill_range(&mut packed, 0.1, 0.9); // rows of [r, g, b, alpha]
    let x = Tensor::new(vec![4, 4], packed);

    let err = grad_check(
        |t, v| {
            let items: Vec<_> = (0..4u32)
                .map(|i| {
                    let row = t.gather_rows(v, &[i]);
                    let c = t.gather_cols(row, &[0, 1, 2]);
                    let a = t.gather_cols(row, &[3]);
                    (c, a)
                })
                .collect();
            let (color, acc) = composite(t, &items, 4);
            let s = t.sum(color);
            let a = t.sum(acc);
            t.add(s, a)
        },
        &x,
        H,
    )
    .unwrap();
    assert!(err <= 1e-5, "composite rel error {}", err);
}

#[test]
fn gradient_linearity() {
    // grad(a*f + b*g) == a*grad(f) + b*grad(g), tolerance 1e-12.
    let mut rng = Rng::new(107);
    let mut data = vec![0.0; 6];
    rng.fill_range(&mut data, -1.0, 1.0);
    let (ca, cb) = (1.7, -0.6);

    let grad_of = |which: u8| -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![1, 6], data.clone(), true);
        let f = {
            let s = tape.mul(x, x);
            tape.sum(s)
        };
        let g = {
            let s = tape.sin(x);
            tape.sum(s)
        };
        let root = match which {
            0 => f,
            1 => g,
            _ => {
                let af = tape.affine(f, ca, 0.0);
                let bg = tape.affine(g, cb, 0.0);
                tape.add(af, bg)
            }
        };
        tape.backward(root).unwrap();
        tape.grad(x).unwrap().to_vec()
    };

    let gf = grad_of(0);
    let gg = grad_of(1);
    let combined = grad_of(2);
    for i in 0..6 {
        let expect = ca * gf[i] + cb * gg[i];
        assert!((combined[i] - expect).abs() <= 1e-12);
    }
}

#[test]
fn tape_replay_is_deterministic() {
    let mut rng = Rng::new(108);
    let mut data = vec![0.0; 12];
    rng.fill_range(&mut data, -1.0, 1.0);

    let run = || {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![3, 4], data.clone(), true);
        let s = tape.sigmoid(x);
        let m = tape.mul(s, x);
        let root = tape.mean(m);
        tape.backward(root).unwrap();
        tape.grad(x).unwrap().to_vec()
    };
    assert_eq!(run(), run());
}
