//! Shared heavy artifacts for the acceptance suite: the pretrained codec,
//! synthetic scenes, fitted scenes, and the helpers the criteria call.
//! Everything is built lazily, once, behind `OnceLock`s so the criteria
//! stay independent while reusing the expensive stages.

use std::path::PathBuf;
use std::sync::OnceLock;

use meshfield_cli::config::{RunConfig, SceneGenConfig, SceneSpecName};
use meshfield_cli::synth::{build_scene, SyntheticScene};
use meshfield_core::autodiff::Tape;
use meshfield_core::codec::{
    decode_offsets_with, generate_patch_database, train_autoencoder, CodecTrainConfig,
    DecoderParams, EncoderParams,
};
use meshfield_core::fmath;
use meshfield_core::mesh::build_icosphere;
use meshfield_core::radiance::{render_image, MlpPreset, RadianceMlp};
use meshfield_core::raster::{rasterize_depth, Camera, FaceRef, T_NEAR};
use meshfield_core::rng::Rng;
use meshfield_core::scene::{
    init_scene, Aabb, PointCloud, SceneConfig, SceneModel, ShapeMode,
};
use meshfield_core::train::{
    fit_shapes, geometry_loss, mean_psnr, train_radiance, DepthView, FitConfig,
    ImageView, RadianceTrainConfig,
};

pub fn tempdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("meshfield-acceptance-{}-{}", name, std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// A generated scene held in memory: geometry, cameras, split, and the
/// ground-truth views the training stages consume.
#[allow(dead_code)]
pub struct SceneFixture {
    pub synth: SyntheticScene,
    pub scene_cfg: RunConfig,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub depth_complete: Vec<DepthView>,
    pub image_train: Vec<ImageView>,
    pub image_test: Vec<ImageView>,
}

pub trait HierarchySizes {
    fn hierarchy_sizes(&self) -> &[f64];
}

impl HierarchySizes for RunConfig {
    fn hierarchy_sizes(&self) -> &[f64] {
        &self.hierarchy.voxel_sizes
    }
}

fn render_views(synth: &SyntheticScene, cfg: &RunConfig, indices: &[usize]) -> (Vec<DepthView>, Vec<ImageView>) {
    let mut depth_views = Vec::new();
    let mut image_views = Vec::new();
    for &i in indices {
        let cam = &synth.cameras[i];
        let (rgb, depth) = synth.render_view(cam, &cfg.background);
        depth_views.push(DepthView { camera: cam.clone(), depth });
        image_views.push(ImageView { camera: cam.clone(), rgb });
    }
    (depth_views, image_views)
}

fn make_scene_fixture(spec: SceneSpecName, seed: u64) -> SceneFixture {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.scene = SceneGenConfig { spec, ..cfg.scene };
    let synth = build_scene(&cfg.scene, seed);
    let (train_idx, test_idx) =
        meshfield_cli::pipeline::train_test_split(cfg.scene.views, cfg.scene.test_every);
    let (depth_complete, image_train) = render_views(&synth, &cfg, &train_idx);
    let (_, image_test) = render_views(&synth, &cfg, &test_idx);
    SceneFixture { synth, scene_cfg: cfg, train_idx, test_idx, depth_complete, image_train, image_test }
}

/// Apply random dropout to the valid pixels of each depth view.
pub fn dropout_views(views: &[DepthView], fraction: f64, seed: u64) -> Vec<DepthView> {
    views
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let mut rng = Rng::new(seed ^ (vi as u64) << 8);
            DepthView {
                camera: v.camera.clone(),
                depth: v
                    .depth
                    .iter()
                    .map(|&d| if d > 0.0 && rng.uniform() < fraction { 0.0 } else { d })
                    .collect(),
            }
        })
        .collect()
}

#[allow(dead_code)]
pub struct Shared {
    pub codec_dec: DecoderParams,
    pub codec_enc: EncoderParams,
    pub template_level: usize,
    quad: OnceLock<SceneFixture>,
    street: OnceLock<SceneFixture>,
    fitted_quad: OnceLock<SceneModel>,
    trained_quad: OnceLock<SceneModel>,
}

static SHARED: OnceLock<Shared> = OnceLock::new();

/// The pipeline codec: plane-heavy database, 200 epochs, dense chamfer
/// sampling (the CLI pipeline defaults).
pub fn shared() -> &'static Shared {
    SHARED.get_or_init(|| {
        let template_level = 1;
        let template = build_icosphere(template_level).unwrap();
        let mut rng = Rng::new(0xc0dec);
        let mut enc = EncoderParams::init(&mut rng);
        let mut dec = DecoderParams::init(template.vertex_count(), &mut rng);
        let db = generate_patch_database(500, 11);
        let cfg = CodecTrainConfig {
            epochs: 200,
            chamfer_samples: 512,
            encoder_samples: 192,
            seed: 0x7a11,
            ..Default::default()
        };
        let outcome = train_autoencoder(&db, &mut enc, &mut dec, &template, &cfg);
        assert!(!outcome.diverged, "fixture codec diverged");
        Shared {
            codec_dec: dec,
            codec_enc: enc,
            template_level,
            quad: OnceLock::new(),
            street: OnceLock::new(),
            fitted_quad: OnceLock::new(),
            trained_quad: OnceLock::new(),
        }
    })
}

impl Shared {
    pub fn quad_scene(&self) -> &SceneFixture {
        self.quad.get_or_init(|| make_scene_fixture(SceneSpecName::Quad, 7))
    }

    pub fn street_scene(&self) -> &SceneFixture {
        self.street.get_or_init(|| make_scene_fixture(SceneSpecName::StreetStrip, 7))
    }

    /// Build a fresh scene model over a fixture's point cloud.
    pub fn build_scene(
        &self,
        fixture: &SceneFixture,
        shape_mode: ShapeMode,
        preset: MlpPreset,
    ) -> SceneModel {
        let cfg = &fixture.scene_cfg;
        let cloud = fixture.synth.sample_cloud(cfg.scene.cloud_points, cfg.seed ^ 0xc10d);
        let template = build_icosphere(self.template_level).unwrap();
        let mut rng = Rng::new(cfg.seed ^ 0xad1a);
        let radiance = RadianceMlp::init(
            preset,
            cfg.features.dim,
            cfg.mlp.effective_feature_freq(),
            cfg.mlp.effective_view_freq(),
            &mut rng,
        );
        let scene_cfg = SceneConfig {
            voxel_sizes: cfg.hierarchy.voxel_sizes.clone(),
            j_nearest: cfg.hierarchy.j_nearest.clone(),
            feature_dim: cfg.features.dim,
            feature_init_freq: cfg.features.init_freq,
            radius_scale: cfg.hierarchy.radius_scale,
            shape_mode,
            background_color: cfg.background,
        };
        init_scene(&PointCloud::new(cloud.points.data.clone()).unwrap(), self.codec_dec.clone(), template, radiance, &scene_cfg)
            .expect("fixture scenes voxelize")
    }

    /// The quad scene fitted once with the full method (latent codes).
    pub fn fitted_quad(&self) -> &SceneModel {
        self.fitted_quad.get_or_init(|| {
            let quad = self.quad_scene();
            let mut scene = self.build_scene(quad, ShapeMode::Latent, MlpPreset::Full);
            let cfg = FitConfig {
                iterations: quad.scene_cfg.fit.iterations,
                lr: quad.scene_cfg.fit.lr,
                seed: quad.scene_cfg.seed ^ 0xf17,
                log_every: 100,
            };
            let outcome = fit_shapes(&mut scene, &quad.depth_complete, &cfg).unwrap();
            assert!(!outcome.aborted);
            scene
        })
    }

    /// The quad scene with radiance trained at the full preset (shared by
    /// C7 and the editing criterion).
    pub fn trained_quad(&self) -> &SceneModel {
        self.trained_quad.get_or_init(|| {
            let quad = self.quad_scene();
            let mut scene = self.fitted_quad().clone();
            let cfg = RadianceTrainConfig {
                iterations: quad.scene_cfg.radiance.iterations,
                lr: quad.scene_cfg.radiance.lr,
                rays_per_step: quad.scene_cfg.radiance.rays_per_step,
                seed: quad.scene_cfg.seed ^ 0xad,
                log_every: 200,
                eval_every: 0,
            };
            let outcome =
                train_radiance(&mut scene, &quad.image_train, &[], &cfg).unwrap();
            assert!(!outcome.aborted);
            scene
        })
    }
}

pub struct FitOutcomeSummary {
    /// Final mean depth L1 per level, evaluated over all training views.
    pub final_depth_l1: Vec<f64>,
}

/// Fit a fresh latent-mode scene on the quad depth (complete or 50%
/// dropout) and measure the final per-level depth error.
pub fn fit_quad(fx: &Shared, quad: &SceneFixture, with_dropout: bool) -> FitOutcomeSummary {
    let mut scene = fx.build_scene(quad, ShapeMode::Latent, MlpPreset::Lightweight);
    let views = if with_dropout {
        dropout_views(&quad.depth_complete, 0.5, 0xd20)
    } else {
        quad.depth_complete.clone()
    };
    let cfg = FitConfig {
        iterations: quad.scene_cfg.fit.iterations,
        lr: quad.scene_cfg.fit.lr,
        seed: quad.scene_cfg.seed ^ 0xf17,
        log_every: 100,
    };
    let outcome = fit_shapes(&mut scene, &views, &cfg).unwrap();
    assert!(!outcome.aborted);
    FitOutcomeSummary { final_depth_l1: eval_depth_l1(&scene, &quad.depth_complete) }
}

/// Mean depth L1 per level over the given (complete) supervision.
pub fn eval_depth_l1(scene: &SceneModel, views: &[DepthView]) -> Vec<f64> {
    (0..scene.levels.len())
        .map(|li| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for v in views {
                if let Some(step) = geometry_loss(scene, li, v) {
                    sum += step.loss_value * step.covered_pixels as f64;
                    count += step.covered_pixels;
                }
            }
            sum / count.max(1) as f64
        })
        .collect()
}

pub struct RadianceSummary {
    pub train_psnr: f64,
    pub holdout_psnr: f64,
}

/// Train radiance at a preset on the shared fitted quad geometry and
/// report train/held-out PSNR.
pub fn train_quad_radiance(fx: &Shared, preset: MlpPreset) -> RadianceSummary {
    let quad = fx.quad_scene();
    let scene: SceneModel = if preset == MlpPreset::Full {
        fx.trained_quad().clone()
    } else {
        let mut scene = fx.fitted_quad().clone();
        let cfg = &quad.scene_cfg;
        let mut rng = Rng::new(cfg.seed ^ 0xad1a ^ 1);
        scene.radiance = RadianceMlp::init(
            preset,
            cfg.features.dim,
            cfg.mlp.effective_feature_freq(),
            cfg.mlp.effective_view_freq(),
            &mut rng,
        );
        let tcfg = RadianceTrainConfig {
            iterations: cfg.radiance.iterations,
            lr: cfg.radiance.lr,
            rays_per_step: cfg.radiance.rays_per_step,
            seed: cfg.seed ^ 0xad,
            log_every: 200,
            eval_every: 0,
        };
        let outcome = train_radiance(&mut scene, &quad.image_train, &[], &tcfg).unwrap();
        assert!(!outcome.aborted);
        scene
    };
    RadianceSummary {
        train_psnr: mean_psnr(&scene, &quad.image_train),
        holdout_psnr: mean_psnr(&scene, &quad.image_test),
    }
}

/// Street-strip ablation: held-out PSNR under latent fitting, direct
/// vertex offsets, and no shape optimization, all with 30% depth dropout.
pub fn street_ablation_psnrs(fx: &Shared) -> (f64, f64, f64) {
    let street = fx.street_scene();
    let dropped = dropout_views(&street.depth_complete, 0.3, 0x8ab);

    let run = |mode: ShapeMode| -> f64 {
        let mut scene = fx.build_scene(street, mode, MlpPreset::Lightweight);
        if mode != ShapeMode::TemplateOnly {
            let cfg = FitConfig {
                iterations: street.scene_cfg.fit.iterations,
                lr: street.scene_cfg.fit.lr,
                seed: street.scene_cfg.seed ^ 0xf17,
                log_every: 100,
            };
            let outcome = fit_shapes(&mut scene, &dropped, &cfg).unwrap();
            assert!(!outcome.aborted);
        }
        let tcfg = RadianceTrainConfig {
            iterations: 1200,
            lr: street.scene_cfg.radiance.lr,
            rays_per_step: street.scene_cfg.radiance.rays_per_step,
            seed: street.scene_cfg.seed ^ 0xad,
            log_every: 300,
            eval_every: 0,
        };
        let outcome = train_radiance(&mut scene, &street.image_train, &[], &tcfg).unwrap();
        assert!(!outcome.aborted);
        mean_psnr(&scene, &street.image_test)
    };

    (run(ShapeMode::Latent), run(ShapeMode::DirectOffsets), run(ShapeMode::TemplateOnly))
}

/// Editing invariants (criterion 9): remove-then-reinsert renders
/// bit-identically; removing everything renders pure background.
pub fn check_editing_invariants(fx: &Shared) {
    let quad = fx.quad_scene();
    let camera = &quad.synth.cameras[1];
    let scene = fx.trained_quad();

    let baseline = render_image(scene, camera);

    // Remove a sub-region, reinsert it from the pre-edit clone.
    let mut edited = scene.clone();
    let donor = scene.clone();
    let region = Aabb { lo: [-0.6, -0.6, -1.0], hi: [0.6, 0.6, 1.0] };
    let removed = edited.remove_primitives(&region);
    assert!(removed > 0, "the region should contain primitives");
    let inserted = edited.insert_primitives(&donor, &region, [0.0; 3]).unwrap();
    assert_eq!(inserted, removed);
    let roundtrip = render_image(&edited, camera);
    assert_eq!(baseline.rgb, roundtrip.rgb, "remove+reinsert must render identically");
    assert_eq!(baseline.depth, roundtrip.depth);

    // Removing everything leaves pure background.
    let mut empty = scene.clone();
    let everything = Aabb { lo: [-100.0; 3], hi: [100.0; 3] };
    let total = empty.primitive_count();
    assert_eq!(empty.remove_primitives(&everything), total);
    let bg_render = render_image(&empty, camera);
    let bg = empty.background_color();
    for px in bg_render.rgb.chunks_exact(3) {
        for k in 0..3 {
            assert!((px[k] - bg[k]).abs() < 1e-15, "pixel is not pure background");
        }
    }
}

/// Finite-difference check of the depth loss w.r.t. a latent code on a
/// one-primitive scene, restricted to pixels whose face assignment is
/// stable under every probe the central difference makes.
pub fn depth_grad_check_one_primitive(h: f64) -> f64 {
    let template = build_icosphere(1).unwrap();
    let n = template.vertex_count();
    let mut rng = Rng::new(0x9e0);
    let mut dec = DecoderParams::init(n, &mut rng);
    rng.fill_range(&mut dec.out.w.data, -0.15, 0.15);
    rng.fill_range(&mut dec.skip.data, -0.1, 0.1);

    let center = [0.25, 0.25, 0.25];
    let radius = 0.25 * fmath::sqrt(3.0);
    let camera = Camera::look_at(
        50.0,
        50.0,
        48,
        36,
        [0.25, 0.2, -2.2],
        [0.25, 0.25, 0.25],
        [0.0, 1.0, 0.0],
    )
    .unwrap();

    let mut z = vec![0.0; 8];
    rng.fill_range(&mut z, -1.0, 1.0);
    let norm = fmath::sqrt(z.iter().map(|x| x * x).sum());
    z.iter_mut().for_each(|x| *x /= norm);

    // Decode world vertices for a given code (plain values).
    let world_of = |zdata: &[f64]| -> Vec<f64> {
        let mut tape = Tape::new();
        let leaves = meshfield_core::autodiff::leaf_vars(&mut tape, &dec.params(), false);
        let zv = tape.constant(vec![1, 8], zdata.to_vec());
        let off = decode_offsets_with(&mut tape, &leaves, zv);
        let off = tape.value(off);
        template
            .vertices
            .data
            .iter()
            .zip(off)
            .enumerate()
            .map(|(i, (t, o))| center[i % 3] + radius * (t + o))
            .collect()
    };
    let faces_of = |world: &[f64]| -> Vec<FaceRef> {
        template
            .faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let v = |i: u32| {
                    let s = i as usize * 3;
                    [world[s], world[s + 1], world[s + 2]]
                };
                FaceRef { prim: 0, face: fi as u32, v0: v(f[0]), v1: v(f[1]), v2: v(f[2]) }
            })
            .collect()
    };

    // Pixels whose assigned face is identical across the base point and
    // every +-h probe: the loss is smooth there.
    let assignment = |zdata: &[f64]| -> Vec<Option<(u32, u32)>> {
        let pass = rasterize_depth(&faces_of(&world_of(zdata)), &camera, T_NEAR);
        pass.assign.iter().map(|a| a.map(|pf| (pf.prim, pf.face))).collect()
    };
    let base_assign = assignment(&z);
    let mut stable: Vec<bool> = base_assign.iter().map(|a| a.is_some()).collect();
    for i in 0..8 {
        for sign in [-1.0, 1.0] {
            let mut zp = z.clone();
            zp[i] += sign * h;
            for (s, (a, b)) in stable.iter_mut().zip(assignment(&zp).iter().zip(&base_assign)) {
                *s &= a == b;
            }
        }
    }
    let stable_pixels: Vec<usize> =
        stable.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect();
    assert!(stable_pixels.len() > 50, "need enough assignment-stable pixels");

    // Synthetic target: base depth plus a smooth offset.
    let base_pass = rasterize_depth(&faces_of(&world_of(&z)), &camera, T_NEAR);
    let target: Vec<f64> = stable_pixels.iter().map(|&p| base_pass.depth[p] + 0.05).collect();

    // Loss over the stable subset, differentiable w.r.t. z.
    let loss_of = |tape: &mut Tape, zvar: meshfield_core::autodiff::Var| {
        let leaves = meshfield_core::autodiff::leaf_vars(tape, &dec.params(), false);
        let off = decode_offsets_with(tape, &leaves, zvar);
        let off = tape.reshape(off, vec![n, 3]);
        let tmpl = tape.constant(vec![n, 3], template.vertices.data.clone());
        let base = tape.add(tmpl, off);
        let radii = tape.constant(vec![n, 1], vec![radius; n]);
        let scaled = tape.mul_col_broadcast(base, radii);
        let centers = tape.constant(vec![n, 3], center.iter().copied().cycle().take(n * 3).collect());
        let world = tape.add(scaled, centers);

        let mut i0 = Vec::new();
        let mut i1 = Vec::new();
        let mut i2 = Vec::new();
        let mut dirs = Vec::new();
        for &p in &stable_pixels {
            let (prim, face) = base_assign[p].unwrap();
            assert_eq!(prim, 0);
            let f = &template.faces[face as usize];
            i0.push(f[0]);
            i1.push(f[1]);
            i2.push(f[2]);
            let (_, d) = camera.ray(p % camera.width, p / camera.width);
            dirs.extend_from_slice(&d);
        }
        let count = stable_pixels.len();
        let v0 = tape.gather_rows(world, &i0);
        let v1 = tape.gather_rows(world, &i1);
        let v2 = tape.gather_rows(world, &i2);
        let e1 = tape.sub(v1, v0);
        let e2 = tape.sub(v2, v0);
        let nrm = tape.cross_rows(e1, e2);
        let o_const = tape.constant(
            vec![count, 3],
            camera.trans.iter().copied().cycle().take(count * 3).collect(),
        );
        let d_const = tape.constant(vec![count, 3], dirs);
        let vo = tape.sub(v0, o_const);
        let num = tape.dot_rows(vo, nrm);
        let den = tape.dot_rows(d_const, nrm);
        let t = tape.div(num, den);
        let tgt = tape.constant(vec![count, 1], target.clone());
        let diff = tape.sub(t, tgt);
        let l1 = tape.l1(diff);
        tape.affine(l1, 1.0 / count as f64, 0.0)
    };

    let zt = meshfield_core::autodiff::Tensor::new(vec![1, 8], z);
    meshfield_core::autodiff::grad_check(loss_of, &zt, h).unwrap()
}
