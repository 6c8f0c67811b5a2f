use std::path::Path;

use meshfield_core::scene::ShapeMode;
use meshfield_core::train::{fit_shapes, FitConfig};

use crate::commands::{AblationFlag, CommonArgs, PresetFlag};
use crate::error::{CliError, Result};
use crate::formats::checkpoint::{load_codec, save_scene};
use crate::formats::csvlog::write_history;
use crate::pipeline::{build_scene_model, load_depth_views, load_scene_dir, train_test_split};

pub fn run(
    common: &CommonArgs,
    scene_dir: &Path,
    codec: &Path,
    out: &Path,
    ablation: Option<AblationFlag>,
    preset: Option<PresetFlag>,
) -> Result<()> {
    let cfg = super::load_config(common)?;
    let data = load_scene_dir(scene_dir)?;
    let (enc, dec, template_level) = load_codec(codec)?;
    drop(enc); // scene fitting optimizes codes directly

    let shape_mode = match ablation {
        Some(AblationFlag::DirectShape) => ShapeMode::DirectOffsets,
        Some(AblationFlag::NoShapeOptim) => ShapeMode::TemplateOnly,
        _ => ShapeMode::Latent,
    };
    let no_hierarchy = ablation == Some(AblationFlag::NoHierarchy);

    let mut scene = build_scene_model(
        &cfg,
        &data.cloud,
        dec,
        template_level,
        shape_mode,
        no_hierarchy,
        preset.map(Into::into),
    )?;

    let (train_idx, _) = train_test_split(data.cameras.len(), data.meta.test_every);
    let views = load_depth_views(scene_dir, &data.cameras, &train_idx, cfg.fit.use_dropout_depth)?;

    if shape_mode == ShapeMode::TemplateOnly {
        // The no-shape-optimization ablation keeps raw templates.
        scene.rebuild_bvh();
        save_scene(out, &scene, template_level)?;
        println!("fit-shape: skipped (no-shape-optim ablation) -> {}", out.display());
        return Ok(());
    }

    let fit_cfg = FitConfig {
        iterations: cfg.fit.iterations,
        lr: cfg.fit.lr,
        seed: cfg.seed ^ 0xf17,
        log_every: cfg.fit.log_every,
    };
    let outcome =
        fit_shapes(&mut scene, &views, &fit_cfg).map_err(|e| CliError::Train(e.to_string()))?;
    if outcome.aborted {
        return Err(CliError::Train("shape fitting diverged; rolled back".into()));
    }

    save_scene(out, &scene, template_level)?;
    write_history(&out.with_extension("loss.csv"), &outcome.history)?;

    let last = outcome.history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "fit-shape: {} prims, {} iterations/level, final depth L1 {:.6} m -> {}",
        scene.primitive_count(),
        cfg.fit.iterations,
        last,
        out.display()
    );
    Ok(())
}
