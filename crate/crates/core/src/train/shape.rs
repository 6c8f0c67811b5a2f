use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{LossRecord, TrainError, TrainOutcome};
use crate::autodiff::{leaf_vars, Adam, AdamConfig, Tape, Var};
use crate::codec::{decode_offsets_with, project_unit};
use crate::raster::{rasterize_depth, Camera, FaceRef, T_NEAR};
use crate::scene::{SceneModel, ShapeMode};

/// Depth supervision for one view: meters per pixel, with invalid pixels
/// marked by a non-positive or non-finite value.
#[derive(Clone, Debug)]
pub struct DepthView {
    pub camera: Camera,
    pub depth: Vec<f64>,
}

impl DepthView {
    pub fn valid(&self, pixel: usize) -> bool {
        let d = self.depth[pixel];
        d.is_finite() && d > 0.0
    }

    pub fn valid_count(&self) -> usize {
        (0..self.depth.len()).filter(|&p| self.valid(p)).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { iterations: 500, lr: 1e-2, seed: 0, log_every: 25 }
    }
}

/// One differentiable depth evaluation: the loss value and the tape state
/// needed to pull gradients back into the per-primitive shape parameters.
pub struct ShapeStep {
    pub loss: Var,
    pub loss_value: f64,
    pub covered_pixels: usize,
    pub tape: Tape,
    /// Per-primitive leaf in primitive order.
    pub shape_leaves: Vec<Var>,
}

/// Mean L1 depth error of one level against one view, over pixels that are
/// both covered by the render and valid in the supervision. Differentiable
/// w.r.t. the level's shape parameters through the pixel-to-face assignment
/// frozen by this forward pass. Returns `None` when no pixel qualifies.
pub fn geometry_loss(scene: &SceneModel, level: usize, view: &DepthView) -> Option<ShapeStep> {
    let mut tape = Tape::new();
    let world = world_vertices_on_tape(&mut tape, scene, level, true);

    // Rasterize at current values with the assignment frozen.
    let n = scene.template.vertex_count();
    let world_data = tape.value(world.vertices).to_vec();
    let faces = face_refs_from(&world_data, scene, level);
    let pass = rasterize_depth(&faces, &view.camera, T_NEAR);

    let mut i0 = Vec::new();
    let mut i1 = Vec::new();
    let mut i2 = Vec::new();
    let mut dirs = Vec::new();
    let mut targets = Vec::new();
    for (pixel, assigned) in pass.assign.iter().enumerate() {
        let Some(pf) = assigned else { continue };
        if !view.valid(pixel) {
            continue;
        }
        let face = &scene.template.faces[pf.face as usize];
        let base = pf.prim as usize * n;
        i0.push((base + face[0] as usize) as u32);
        i1.push((base + face[1] as usize) as u32);
        i2.push((base + face[2] as usize) as u32);
        let (_, d) = view.camera.ray(pixel % pass.width, pixel / pass.width);
        dirs.extend_from_slice(&d);
        targets.push(view.depth[pixel]);
    }
    let covered = targets.len();
    if covered == 0 {
        return None;
    }

    // Depth of each pixel as the ray-plane intersection with its assigned
    // face: t = dot(v0 - o, n) / dot(d, n).
    let v0 = tape.gather_rows(world.vertices, &i0);
    let v1 = tape.gather_rows(world.vertices, &i1);
    let v2 = tape.gather_rows(world.vertices, &i2);
    let e1 = tape.sub(v1, v0);
    let e2 = tape.sub(v2, v0);
    let normal = tape.cross_rows(e1, e2);

    let origin = view.camera.trans;
    let o_const = tape.constant(vec![covered, 3], origin.iter().copied().cycle().take(covered * 3).collect());
    let d_const = tape.constant(vec![covered, 3], dirs);
    let vo = tape.sub(v0, o_const);
    let num = tape.dot_rows(vo, normal);
    let den = tape.dot_rows(d_const, normal);
    let t = tape.div(num, den);

    let tgt = tape.constant(vec![covered, 1], targets);
    let diff = tape.sub(t, tgt);
    let l1 = tape.l1(diff);
    let loss = tape.affine(l1, 1.0 / covered as f64, 0.0);
    let loss_value = tape.value(loss)[0];

    Some(ShapeStep { loss, loss_value, covered_pixels: covered, tape, shape_leaves: world.shape_leaves })
}

struct WorldOnTape {
    vertices: Var,
    shape_leaves: Vec<Var>,
}

/// Batched world vertices `[L*N, 3]` for one level, with per-primitive
/// shape parameters registered as leaves.
fn world_vertices_on_tape(
    tape: &mut Tape,
    scene: &SceneModel,
    level: usize,
    trainable: bool,
) -> WorldOnTape {
    let prims = &scene.levels[level].primitives;
    let n = scene.template.vertex_count();
    let l = prims.len();

    let (base, shape_leaves) = match scene.shape_mode {
        ShapeMode::Latent => {
            let leaves: Vec<Var> = prims
                .iter()
                .map(|p| tape.leaf(p.latent().shape.clone(), p.latent().data.clone(), trainable))
                .collect();
            let codes = tape.stack_rows(&leaves);
            let dec_leaves = leaf_vars(tape, &scene.decoder.params(), false);
            let offsets = decode_offsets_with(tape, &dec_leaves, codes);
            let offsets = tape.reshape(offsets, vec![l * n, 3]);
            let tiled = tape.constant(vec![l * n, 3], tile(&scene.template.vertices.data, l));
            (tape.add(tiled, offsets), leaves)
        }
        ShapeMode::DirectOffsets => {
            let leaves: Vec<Var> = prims
                .iter()
                .map(|p| {
                    let off = p.direct_offsets().expect("direct offsets enabled");
                    tape.leaf(off.shape.clone(), off.data.clone(), trainable)
                })
                .collect();
            let offsets = tape.stack_rows(&leaves);
            let tiled = tape.constant(vec![l * n, 3], tile(&scene.template.vertices.data, l));
            (tape.add(tiled, offsets), leaves)
        }
        ShapeMode::TemplateOnly => {
            let tiled = tape.constant(vec![l * n, 3], tile(&scene.template.vertices.data, l));
            (tiled, Vec::new())
        }
    };

    let mut radii = Vec::with_capacity(l * n);
    let mut centers = Vec::with_capacity(l * n * 3);
    for p in prims {
        for _ in 0..n {
            radii.push(p.radius());
            centers.extend_from_slice(&p.center());
        }
    }
    let radii = tape.constant(vec![l * n, 1], radii);
    let centers = tape.constant(vec![l * n, 3], centers);
    let scaled = tape.mul_col_broadcast(base, radii);
    let vertices = tape.add(scaled, centers);
    WorldOnTape { vertices, shape_leaves }
}

fn tile(template: &[f64], times: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(template.len() * times);
    for _ in 0..times {
        out.extend_from_slice(template);
    }
    out
}

fn face_refs_from(world: &[f64], scene: &SceneModel, level: usize) -> Vec<FaceRef> {
    let n = scene.template.vertex_count();
    let prims = scene.levels[level].primitives.len();
    let mut out = Vec::with_capacity(prims * scene.template.face_count());
    for pi in 0..prims {
        for (fi, f) in scene.template.faces.iter().enumerate() {
            let v = |i: u32| {
                let s = (pi * n + i as usize) * 3;
                [world[s], world[s + 1], world[s + 2]]
            };
            out.push(FaceRef { prim: pi as u32, face: fi as u32, v0: v(f[0]), v1: v(f[1]), v2: v(f[2]) });
        }
    }
    out
}

/// Fit each hierarchy level's shape parameters independently against the
/// depth views, cycling views per iteration. Latent codes are renormalized
/// to unit length after every step; vertex features and MLP weights are
/// untouched. BVHs are rebuilt once per level after its fit.
pub fn fit_shapes(
    scene: &mut SceneModel,
    views: &[DepthView],
    cfg: &FitConfig,
) -> Result<TrainOutcome, TrainError> {
    if views.is_empty() {
        return Err(TrainError::NoViews);
    }
    if scene.shape_mode == ShapeMode::TemplateOnly {
        return Err(TrainError::NothingToOptimize);
    }

    let mut outcome = TrainOutcome::default();
    for level in 0..scene.levels.len() {
        fit_level(scene, views, cfg, level, &mut outcome)?;
    }
    scene.rebuild_bvh();
    Ok(outcome)
}

fn fit_level(
    scene: &mut SceneModel,
    views: &[DepthView],
    cfg: &FitConfig,
    level: usize,
    outcome: &mut TrainOutcome,
) -> Result<(), TrainError> {
    let stage: String = format!("fit-shape-l{}", level + 1);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut any_supervised = false;
    let mut snapshot = snapshot_shape(scene, level);

    for iter in 0..cfg.iterations {
        let view = &views[iter % views.len()];
        let Some(step) = geometry_loss(scene, level, view) else {
            outcome.skipped_views += 1;
            continue;
        };
        any_supervised = true;

        if !step.loss_value.is_finite() {
            restore_shape(scene, level, &snapshot);
            outcome.aborted = true;
            break;
        }

        let mut tape = step.tape;
        tape.backward(step.loss).expect("geometry loss is scalar");

        let prims = &mut scene.levels[level].primitives;
        match scene.shape_mode {
            ShapeMode::Latent => {
                for (p, leaf) in prims.iter_mut().zip(&step.shape_leaves) {
                    if let Some(g) = tape.grad(*leaf) {
                        p.latent_mut().accum_grad(g);
                    }
                }
                let mut params: Vec<&mut crate::autodiff::Tensor> =
                    prims.iter_mut().map(|p| p.latent_mut()).collect();
                adam.step(&mut params).expect("latent grads populated");
                for p in prims.iter_mut() {
                    project_unit(p.latent_mut());
                }
            }
            ShapeMode::DirectOffsets => {
                for (p, leaf) in prims.iter_mut().zip(&step.shape_leaves) {
                    if let Some(g) = tape.grad(*leaf) {
                        p.direct_offsets_mut().expect("offsets enabled").accum_grad(g);
                    }
                }
                let mut params: Vec<&mut crate::autodiff::Tensor> = prims
                    .iter_mut()
                    .map(|p| p.direct_offsets_mut().expect("offsets enabled"))
                    .collect();
                adam.step(&mut params).expect("offset grads populated");
            }
            ShapeMode::TemplateOnly => unreachable!("rejected above"),
        }

        if iter % cfg.log_every == 0 || iter + 1 == cfg.iterations {
            outcome.history.push(LossRecord {
                iteration: iter,
                stage: stage.clone(),
                loss: step.loss_value,
                psnr: None,
            });
        }
        snapshot = snapshot_shape(scene, level);
    }

    if !any_supervised {
        return Err(TrainError::NoSupervision);
    }
    Ok(())
}

fn snapshot_shape(scene: &SceneModel, level: usize) -> Vec<Vec<f64>> {
    scene.levels[level]
        .primitives
        .iter()
        .map(|p| match scene.shape_mode {
            ShapeMode::DirectOffsets => p.direct_offsets().expect("offsets enabled").data.clone(),
            _ => p.latent().data.clone(),
        })
        .collect()
}

fn restore_shape(scene: &mut SceneModel, level: usize, snapshot: &[Vec<f64>]) {
    let mode = scene.shape_mode;
    for (p, s) in scene.levels[level].primitives.iter_mut().zip(snapshot) {
        match mode {
            ShapeMode::DirectOffsets => {
                p.direct_offsets_mut().expect("offsets enabled").data.clone_from(s)
            }
            _ => p.latent_mut().data.clone_from(s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::DecoderParams;
    use crate::mesh::build_icosphere;
    use crate::radiance::{MlpPreset, RadianceMlp};
    use crate::rng::Rng;
    use crate::scene::{init_scene, PointCloud, SceneConfig};

    fn scene_with_mode(mode: ShapeMode) -> SceneModel {
        let template = build_icosphere(1).unwrap();
        let mut rng = Rng::new(71);
        let mut decoder = DecoderParams::init(template.vertex_count(), &mut rng);
        // Non-zero output layer so latents influence the shape with enough
        // reach to move the surface by a few centimeters.
        rng.fill_range(&mut decoder.out.w.data, -0.2, 0.2);
        let radiance = RadianceMlp::init(MlpPreset::Lightweight, 21, 2, 2, &mut rng);
        let pc = PointCloud::new(vec![0.25, 0.25, 0.25]).unwrap();
        let cfg = SceneConfig {
            voxel_sizes: vec![0.5],
            j_nearest: vec![4],
            shape_mode: mode,
            ..SceneConfig::default()
        };
        init_scene(&pc, decoder, template, radiance, &cfg).unwrap()
    }

    fn front_view() -> Camera {
        Camera::look_at(50.0, 50.0, 32, 24, [0.25, 0.25, -2.0], [0.25, 0.25, 0.25], [0.0, 1.0, 0.0])
            .unwrap()
    }

    fn flat_depth(camera: &Camera, scene: &SceneModel, level: usize) -> DepthView {
        // Supervise with the scene's own current depth: already optimal.
        let world = scene.world_vertices(level, 0);
        let faces = face_refs_from(&world, scene, level);
        let pass = rasterize_depth(&faces, camera, T_NEAR);
        DepthView { camera: camera.clone(), depth: pass.depth.iter().map(|&d| if d.is_finite() { d } else { 0.0 }).collect() }
    }

    #[test]
    fn perfect_supervision_gives_zero_loss() {
        let scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let view = flat_depth(&cam, &scene, 0);
        let step = geometry_loss(&scene, 0, &view).unwrap();
        assert!(step.loss_value.abs() < 1e-9, "loss {}", step.loss_value);
    }

    #[test]
    fn constant_offset_gives_that_offset() {
        let scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let mut view = flat_depth(&cam, &scene, 0);
        for d in view.depth.iter_mut() {
            if *d > 0.0 {
                *d += 0.125;
            }
        }
        let step = geometry_loss(&scene, 0, &view).unwrap();
        assert!((step.loss_value - 0.125).abs() < 1e-9, "loss {}", step.loss_value);
    }

    #[test]
    fn masked_supervision_matches_reference() {
        // Randomly invalidate half the pixels; the loss must equal an
        // independent recomputation over the surviving overlap.
        let scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let mut view = flat_depth(&cam, &scene, 0);
        for d in view.depth.iter_mut() {
            if *d > 0.0 {
                *d += 0.2;
            }
        }
        let mut rng = Rng::new(17);
        let full = view.clone();
        for d in view.depth.iter_mut() {
            if rng.uniform() < 0.5 {
                *d = 0.0; // invalid marker
            }
        }

        let step = geometry_loss(&scene, 0, &view).unwrap();

        // Reference: mean |rendered - target| over covered & valid pixels.
        let world = scene.world_vertices(0, 0);
        let faces = face_refs_from(&world, &scene, 0);
        let pass = rasterize_depth(&faces, &cam, T_NEAR);
        let mut sum = 0.0;
        let mut count = 0;
        for (pixel, assigned) in pass.assign.iter().enumerate() {
            if assigned.is_some() && view.valid(pixel) {
                sum += (pass.depth[pixel] - view.depth[pixel]).abs();
                count += 1;
            }
        }
        assert!(count > 0 && count < full.valid_count());
        let reference = sum / count as f64;
        assert!(
            (step.loss_value - reference).abs() < 1e-9,
            "loss {} vs reference {}",
            step.loss_value,
            reference
        );
    }

    #[test]
    fn no_overlap_returns_none() {
        let scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let view = DepthView { camera: cam, depth: vec![0.0; 32 * 24] };
        assert!(geometry_loss(&scene, 0, &view).is_none());
    }

    #[test]
    fn template_only_rejected() {
        let mut scene = scene_with_mode(ShapeMode::TemplateOnly);
        let cam = front_view();
        let view = flat_depth(&cam, &scene, 0);
        assert!(matches!(
            fit_shapes(&mut scene, &[view], &FitConfig::default()),
            Err(TrainError::NothingToOptimize)
        ));
    }

    #[test]
    fn stationary_scene_stays_put() {
        // Already-optimal supervision: loss stays within noise over a few
        // iterations and codes stay unit length.
        let mut scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let view = flat_depth(&cam, &scene, 0);
        // Adam steps scale with lr even on noise-level gradients, so a
        // stationarity check needs a small rate.
        let cfg = FitConfig { iterations: 10, lr: 1e-6, seed: 1, log_every: 1 };
        let out = fit_shapes(&mut scene, &[view], &cfg).unwrap();
        assert!(!out.aborted);
        for rec in &out.history {
            assert!(rec.loss < 1e-6, "loss drifted: {}", rec.loss);
        }
        for p in &scene.levels[0].primitives {
            let norm: f64 = p.latent().data.iter().map(|x| x * x).sum::<f64>();
            assert!((norm - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn fitting_reduces_depth_error() {
        // Supervise with a slightly flattened version of the sphere: the
        // latent fit must reduce the loss.
        let mut scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let mut view = flat_depth(&cam, &scene, 0);
        for d in view.depth.iter_mut() {
            if *d > 0.0 {
                *d += 0.03;
            }
        }
        let first = geometry_loss(&scene, 0, &view).unwrap().loss_value;
        let cfg = FitConfig { iterations: 80, lr: 1e-2, seed: 3, log_every: 10 };
        fit_shapes(&mut scene, &[view.clone()], &cfg).unwrap();
        let last = geometry_loss(&scene, 0, &view).unwrap().loss_value;
        assert!(last < first * 0.8, "no improvement: {} -> {}", first, last);
    }

    #[test]
    fn direct_offsets_also_fit() {
        let mut scene = scene_with_mode(ShapeMode::DirectOffsets);
        let cam = front_view();
        let mut view = flat_depth(&cam, &scene, 0);
        for d in view.depth.iter_mut() {
            if *d > 0.0 {
                *d += 0.08;
            }
        }
        let first = geometry_loss(&scene, 0, &view).unwrap().loss_value;
        let cfg = FitConfig { iterations: 60, lr: 5e-3, seed: 3, log_every: 10 };
        fit_shapes(&mut scene, &[view.clone()], &cfg).unwrap();
        let last = geometry_loss(&scene, 0, &view).unwrap().loss_value;
        assert!(last < first * 0.8, "no improvement: {} -> {}", first, last);
    }

    #[test]
    fn features_and_mlp_untouched_by_fit() {
        let mut scene = scene_with_mode(ShapeMode::Latent);
        let cam = front_view();
        let mut view = flat_depth(&cam, &scene, 0);
        for d in view.depth.iter_mut() {
            if *d > 0.0 {
                *d += 0.05;
            }
        }
        let features_before: Vec<Vec<f64>> = scene.levels[0]
            .primitives
            .iter()
            .map(|p| p.features.data.clone())
            .collect();
        let mlp_before: Vec<Vec<f64>> =
            scene.radiance.params().iter().map(|p| p.data.clone()).collect();

        let cfg = FitConfig { iterations: 20, lr: 1e-2, seed: 5, log_every: 5 };
        fit_shapes(&mut scene, &[view], &cfg).unwrap();

        for (p, before) in scene.levels[0].primitives.iter().zip(&features_before) {
            assert_eq!(&p.features.data, before);
        }
        for (p, before) in scene.radiance.params().iter().zip(&mlp_before) {
            assert_eq!(&p.data, before);
        }
    }
}
