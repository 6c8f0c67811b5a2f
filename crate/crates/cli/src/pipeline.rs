//! Glue shared by the subcommands: loading scene directories, building
//! scene models from configs and codec checkpoints, and the train/test
//! view split.

use std::path::Path;

use meshfield_core::codec::DecoderParams;
use meshfield_core::mesh::build_icosphere;
use meshfield_core::radiance::{MlpPreset, RadianceMlp};
use meshfield_core::raster::Camera;
use meshfield_core::rng::Rng;
use meshfield_core::scene::{init_scene, PointCloud, SceneModel, ShapeMode};
use meshfield_core::train::{DepthView, ImageView};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::cameras::load_cameras;
use crate::formats::depth::read_depth;
use crate::formats::image::read_image;
use crate::formats::ply::load_ply;
use crate::synth::SceneMeta;

pub struct SceneDir {
    pub cloud: PointCloud,
    pub cameras: Vec<Camera>,
    pub meta: SceneMeta,
}

pub fn load_scene_dir(dir: &Path) -> Result<SceneDir> {
    let cloud = load_ply(&dir.join("cloud.ply"))?;
    let cameras = load_cameras(&dir.join("cameras.json"))?;
    let meta_path = dir.join("meta.json");
    let meta: SceneMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_path).map_err(CliError::io(&meta_path))?,
    )
    .map_err(|e| CliError::Parse { path: meta_path, line: 0, message: e.to_string() })?;
    Ok(SceneDir { cloud, cameras, meta })
}

/// Indices of training and held-out views: every `test_every`-th view
/// (starting at 0) is held out.
pub fn train_test_split(n_views: usize, test_every: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..n_views {
        if i % test_every == 0 {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    // Never let the training set go empty (single-view scenes).
    if train.is_empty() {
        (test.clone(), test)
    } else {
        (train, test)
    }
}

pub fn load_depth_views(
    dir: &Path,
    cameras: &[Camera],
    indices: &[usize],
    use_dropout: bool,
) -> Result<Vec<DepthView>> {
    let sub = if use_dropout { "gt_depth_dropout" } else { "gt_depth" };
    indices
        .iter()
        .map(|&i| {
            let path = dir.join(format!("{}/view_{:03}.bin", sub, i));
            let map = read_depth(&path)?;
            let cam = &cameras[i];
            if map.width != cam.width || map.height != cam.height {
                return Err(CliError::Scene(format!(
                    "depth map {} does not match camera {}x{}",
                    path.display(),
                    cam.width,
                    cam.height
                )));
            }
            Ok(DepthView { camera: cam.clone(), depth: map.depth })
        })
        .collect()
}

pub fn load_image_views(dir: &Path, cameras: &[Camera], indices: &[usize]) -> Result<Vec<ImageView>> {
    indices
        .iter()
        .map(|&i| {
            let path = dir.join(format!("gt_rgb/view_{:03}.png", i));
            let img = read_image(&path)?;
            let cam = &cameras[i];
            if img.width != cam.width || img.height != cam.height {
                return Err(CliError::Scene(format!(
                    "image {} does not match camera {}x{}",
                    path.display(),
                    cam.width,
                    cam.height
                )));
            }
            Ok(ImageView { camera: cam.clone(), rgb: img.rgb })
        })
        .collect()
}

/// Build a fresh scene model from the cloud, the pretrained decoder, and
/// the run config (with CLI overrides applied).
pub fn build_scene_model(
    cfg: &RunConfig,
    cloud: &PointCloud,
    decoder: DecoderParams,
    template_level: usize,
    shape_mode: ShapeMode,
    no_hierarchy: bool,
    preset_override: Option<MlpPreset>,
) -> Result<SceneModel> {
    let template =
        build_icosphere(template_level).map_err(|e| CliError::Scene(e.to_string()))?;
    if template.vertex_count() != decoder.vertex_count {
        return Err(CliError::Checkpoint(format!(
            "codec decoder was trained for {} vertices but template level {} has {}",
            decoder.vertex_count,
            template_level,
            template.vertex_count()
        )));
    }
    let preset = preset_override.unwrap_or(cfg.mlp.preset.into());
    let mut rng = Rng::new(cfg.seed ^ 0xad1a);
    let radiance = RadianceMlp::init(
        preset,
        cfg.features.dim,
        cfg.mlp.effective_feature_freq(),
        cfg.mlp.effective_view_freq(),
        &mut rng,
    );
    let scene_cfg = cfg.scene_config(shape_mode, no_hierarchy);
    init_scene(cloud, decoder, template, radiance, &scene_cfg)
        .map_err(|e| CliError::Scene(e.to_string()))
}
