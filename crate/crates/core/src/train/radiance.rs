use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{LossRecord, TrainError, TrainOutcome};
use crate::autodiff::{harvest_grads, leaf_vars, Adam, AdamConfig, Tape, Tensor, Var};
use crate::mesh::face_normal;
use crate::metrics::psnr;
use crate::radiance::{blend_hierarchies, composite, render_image};
use crate::raster::{Camera, T_NEAR};
use crate::rng::Rng;
use crate::scene::SceneModel;

/// Ground-truth colors for one training view.
#[derive(Clone, Debug)]
pub struct ImageView {
    pub camera: Camera,
    /// Row-major RGB in [0, 1], 3 floats per pixel.
    pub rgb: Vec<f64>,
}

/// One frozen ray-surface intersection. Geometry does not move during
/// radiance training, so these are computed once per view and level.
#[derive(Clone, Debug)]
pub struct CachedHit {
    pub prim: u32,
    pub face: u32,
    pub bary: [f64; 3],
    pub t: f64,
    pub normal: [f64; 3],
    pub dir: [f64; 3],
}

struct LevelHits {
    /// Per-pixel span into `hits`.
    spans: Vec<(u32, u32)>,
    hits: Vec<CachedHit>,
}

struct ViewCache {
    per_level: Vec<LevelHits>,
}

/// Per-view, per-level, per-pixel intersections, precomputed against the
/// frozen geometry.
pub struct RayCache {
    views: Vec<ViewCache>,
}

impl RayCache {
    pub fn hits(&self, view: usize, level: usize, pixel: usize) -> &[CachedHit] {
        let lh = &self.views[view].per_level[level];
        let (s, e) = lh.spans[pixel];
        &lh.hits[s as usize..e as usize]
    }
}

pub fn build_ray_cache(scene: &SceneModel, cameras: &[Camera]) -> RayCache {
    let views = cameras
        .iter()
        .map(|camera| {
            let per_level = scene
                .levels
                .iter()
                .enumerate()
                .map(|(li, level)| {
                    let bvh = level.bvh.as_ref().expect("BVH built before radiance training");
                    let worlds: Vec<Vec<f64>> = (0..level.primitives.len())
                        .map(|pi| scene.world_vertices(li, pi))
                        .collect();
                    let mut spans = Vec::with_capacity(camera.pixel_count());
                    let mut hits = Vec::new();
                    for iy in 0..camera.height {
                        for ix in 0..camera.width {
                            let (origin, dir) = camera.ray(ix, iy);
                            let start = hits.len() as u32;
                            for h in bvh.intersect_ray(&origin, &dir, level.j_nearest, T_NEAR) {
                                let face = &scene.template.faces[h.face as usize];
                                let normal = face_normal(&worlds[h.prim as usize], face);
                                hits.push(CachedHit {
                                    prim: h.prim,
                                    face: h.face,
                                    bary: h.bary,
                                    t: h.t,
                                    normal,
                                    dir,
                                });
                            }
                            spans.push((start, hits.len() as u32));
                        }
                    }
                    LevelHits { spans, hits }
                })
                .collect();
            ViewCache { per_level }
        })
        .collect();
    RayCache { views }
}

/// Leaf handles of everything the radiance stage trains.
pub struct RadianceLeaves {
    pub mlp: Vec<Var>,
    pub background: Var,
    /// Per level, per primitive, in scene order.
    pub features: Vec<Vec<Var>>,
}

/// Sum of squared RGB error over a ray batch, rendered through the frozen
/// geometry. Differentiable w.r.t. vertex features, MLP parameters, and the
/// background color.
pub fn radiance_loss(
    tape: &mut Tape,
    scene: &SceneModel,
    views: &[ImageView],
    cache: &RayCache,
    rays: &[(u32, u32)],
    trainable: bool,
) -> (Var, RadianceLeaves) {
    let mlp_leaves = leaf_vars(tape, &scene.radiance.params(), trainable);
    let bg_leaf = tape.leaf(
        scene.background.shape.clone(),
        scene.background.data.clone(),
        trainable && scene.background.requires_grad,
    );
    let bg = tape.sigmoid(bg_leaf);

    let n = scene.template.vertex_count();

    // Stack per-primitive features into one [L*N, C] matrix per level.
    let mut feature_leaves = Vec::with_capacity(scene.levels.len());
    let mut feature_stacks = Vec::with_capacity(scene.levels.len());
    for level in &scene.levels {
        let leaves: Vec<Var> = level
            .primitives
            .iter()
            .map(|p| {
                tape.leaf(
                    p.features.shape.clone(),
                    p.features.data.clone(),
                    trainable && p.features.requires_grad,
                )
            })
            .collect();
        feature_stacks.push(tape.stack_rows(&leaves));
        feature_leaves.push(leaves);
    }

    // Batch every sampled ray's hits through the MLP once per level.
    let mut level_alpha = Vec::with_capacity(scene.levels.len());
    let mut level_rgb = Vec::with_capacity(scene.levels.len());
    let mut level_spans: Vec<Vec<(u32, u32)>> = Vec::with_capacity(scene.levels.len());
    for li in 0..scene.levels.len() {
        let mut i0 = Vec::new();
        let mut i1 = Vec::new();
        let mut i2 = Vec::new();
        let mut b = [Vec::new(), Vec::new(), Vec::new()];
        let mut gamma = Vec::new();
        let mut spans = Vec::with_capacity(rays.len());
        let mut count = 0u32;
        for &(view, pixel) in rays {
            let start = count;
            for hit in cache.hits(view as usize, li, pixel as usize) {
                let face = &scene.template.faces[hit.face as usize];
                let base = hit.prim as usize * n;
                i0.push((base + face[0] as usize) as u32);
                i1.push((base + face[1] as usize) as u32);
                i2.push((base + face[2] as usize) as u32);
                for k in 0..3 {
                    b[k].push(hit.bary[k]);
                }
                gamma.extend_from_slice(&hit.normal);
                gamma.extend_from_slice(&hit.dir);
                count += 1;
            }
            spans.push((start, count));
        }
        level_spans.push(spans);
        let k = count as usize;
        if k == 0 {
            level_alpha.push(None);
            level_rgb.push(None);
            continue;
        }

        let f0 = tape.gather_rows(feature_stacks[li], &i0);
        let f1 = tape.gather_rows(feature_stacks[li], &i1);
        let f2 = tape.gather_rows(feature_stacks[li], &i2);
        let b0 = tape.constant(vec![k, 1], b[0].clone());
        let b1 = tape.constant(vec![k, 1], b[1].clone());
        let b2 = tape.constant(vec![k, 1], b[2].clone());
        let p0 = tape.mul_col_broadcast(f0, b0);
        let p1 = tape.mul_col_broadcast(f1, b1);
        let p2 = tape.mul_col_broadcast(f2, b2);
        let p01 = tape.add(p0, p1);
        let features = tape.add(p01, p2);
        let gamma = tape.constant(vec![k, 6], gamma);

        let (alpha, rgb) = scene.radiance.forward_with(tape, &mlp_leaves, features, gamma);
        level_alpha.push(Some(alpha));
        level_rgb.push(Some(rgb));
    }

    // Composite per ray, blend levels, accumulate squared error.
    let mut loss = tape.constant_scalar(0.0);
    for (ri, &(view, pixel)) in rays.iter().enumerate() {
        let mut per_level = Vec::with_capacity(scene.levels.len());
        for li in 0..scene.levels.len() {
            let (s, e) = level_spans[li][ri];
            let items: Vec<(Var, Var)> = (s..e)
                .map(|hi| {
                    let alpha = level_alpha[li].expect("hits imply an MLP batch");
                    let rgb = level_rgb[li].expect("hits imply an MLP batch");
                    let a = tape.gather_rows(alpha, &[hi]);
                    let c = tape.gather_rows(rgb, &[hi]);
                    (c, a)
                })
                .collect();
            let (color, acc) = composite(tape, &items, scene.levels[li].j_nearest);
            per_level.push((color, acc));
        }
        let pixel_rgb =
            blend_hierarchies(tape, &per_level, bg).expect("scene has at least one level");

        let v = &views[view as usize];
        let target = &v.rgb[pixel as usize * 3..pixel as usize * 3 + 3];
        let target = tape.constant(vec![1, 3], target.to_vec());
        let err = tape.sub(pixel_rgb, target);
        let sq = tape.mul(err, err);
        let ray_loss = tape.sum(sq);
        loss = tape.add(loss, ray_loss);
    }

    (loss, RadianceLeaves { mlp: mlp_leaves, background: bg_leaf, features: feature_leaves })
}

#[derive(Clone, Copy, Debug)]
pub struct RadianceTrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub rays_per_step: usize,
    pub seed: u64,
    pub log_every: usize,
    /// Cadence of held-out PSNR evaluation; 0 disables it.
    pub eval_every: usize,
}

impl Default for RadianceTrainConfig {
    fn default() -> Self {
        RadianceTrainConfig {
            iterations: 2000,
            lr: 5e-4,
            rays_per_step: 1024,
            seed: 0,
            log_every: 50,
            eval_every: 500,
        }
    }
}

/// Train vertex features, the radiance MLP, and the background color on
/// random ray batches from the training views. Geometry (and therefore the
/// ray cache) is frozen; latent codes are untouched.
pub fn train_radiance(
    scene: &mut SceneModel,
    views: &[ImageView],
    holdout: &[ImageView],
    cfg: &RadianceTrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if views.is_empty() {
        return Err(TrainError::NoViews);
    }
    let cameras: Vec<Camera> = views.iter().map(|v| v.camera.clone()).collect();
    let cache = build_ray_cache(scene, &cameras);

    let root = Rng::new(cfg.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut outcome = TrainOutcome::default();
    let mut snapshot = snapshot_radiance(scene);

    for iter in 0..cfg.iterations {
        let mut rng = root.fork(iter as u64 + 1);
        let rays: Vec<(u32, u32)> = (0..cfg.rays_per_step)
            .map(|_| {
                let v = rng.index(views.len()) as u32;
                let p = rng.index(views[v as usize].camera.pixel_count()) as u32;
                (v, p)
            })
            .collect();

        let mut tape = Tape::new();
        let (loss, leaves) = radiance_loss(&mut tape, scene, views, &cache, &rays, true);
        let loss_value = tape.value(loss)[0];
        if !loss_value.is_finite() {
            restore_radiance(scene, &snapshot);
            outcome.aborted = true;
            break;
        }
        tape.backward(loss).expect("radiance loss is scalar");

        harvest_grads(&tape, &leaves.mlp, &mut scene.radiance.params_mut());
        if let Some(g) = tape.grad(leaves.background) {
            scene.background.accum_grad(g);
        }
        for (li, level_leaves) in leaves.features.iter().enumerate() {
            for (pi, leaf) in level_leaves.iter().enumerate() {
                if let Some(g) = tape.grad(*leaf) {
                    scene.levels[li].primitives[pi].features.accum_grad(g);
                }
            }
        }
        adam.step(&mut radiance_params(scene)).expect("grads populated");
        snapshot = snapshot_radiance(scene);

        let want_log = iter % cfg.log_every == 0 || iter + 1 == cfg.iterations;
        let want_eval = cfg.eval_every > 0
            && !holdout.is_empty()
            && (iter % cfg.eval_every == 0 || iter + 1 == cfg.iterations);
        if want_log || want_eval {
            let psnr_val = if want_eval { Some(mean_psnr(scene, holdout)) } else { None };
            outcome.history.push(LossRecord {
                iteration: iter,
                stage: format!("train-radiance"),
                loss: loss_value,
                psnr: psnr_val,
            });
        }
    }
    Ok(outcome)
}

/// Mean PSNR of rendered views against their ground truth.
pub fn mean_psnr(scene: &SceneModel, views: &[ImageView]) -> f64 {
    let mut sum = 0.0;
    for v in views {
        let out = render_image(scene, &v.camera);
        sum += psnr(&out.rgb, &v.rgb).expect("matching image shapes");
    }
    sum / views.len() as f64
}

fn radiance_params(scene: &mut SceneModel) -> Vec<&mut Tensor> {
    let mut params = scene.radiance.params_mut();
    params.push(&mut scene.background);
    for level in scene.levels.iter_mut() {
        for p in level.primitives.iter_mut() {
            params.push(&mut p.features);
        }
    }
    params
}

fn snapshot_radiance(scene: &SceneModel) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> =
        scene.radiance.params().iter().map(|p| p.data.clone()).collect();
    out.push(scene.background.data.clone());
    for level in &scene.levels {
        for p in &level.primitives {
            out.push(p.features.data.clone());
        }
    }
    out
}

fn restore_radiance(scene: &mut SceneModel, snapshot: &[Vec<f64>]) {
    for (p, s) in radiance_params(scene).into_iter().zip(snapshot) {
        p.data.clone_from(s);
    }
}
