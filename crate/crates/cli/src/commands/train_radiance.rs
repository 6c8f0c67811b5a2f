use std::path::Path;

use meshfield_core::train::{train_radiance, RadianceTrainConfig};

use crate::commands::CommonArgs;
use crate::error::{CliError, Result};
use crate::formats::checkpoint::{load_scene, save_scene};
use crate::formats::csvlog::write_history;
use crate::pipeline::{load_image_views, load_scene_dir, train_test_split};

pub fn run(common: &CommonArgs, scene_dir: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let cfg = super::load_config(common)?;
    let data = load_scene_dir(scene_dir)?;
    let mut scene = load_scene(checkpoint, None)?;

    let (train_idx, test_idx) = train_test_split(data.cameras.len(), data.meta.test_every);
    let views = load_image_views(scene_dir, &data.cameras, &train_idx)?;
    let holdout = load_image_views(scene_dir, &data.cameras, &test_idx)?;

    let train_cfg = RadianceTrainConfig {
        iterations: cfg.radiance.iterations,
        lr: cfg.radiance.lr,
        rays_per_step: cfg.radiance.rays_per_step,
        seed: cfg.seed ^ 0xad,
        log_every: cfg.radiance.log_every,
        eval_every: cfg.radiance.eval_every,
    };
    let outcome = train_radiance(&mut scene, &views, &holdout, &train_cfg)
        .map_err(|e| CliError::Train(e.to_string()))?;
    if outcome.aborted {
        return Err(CliError::Train("radiance training diverged; rolled back".into()));
    }

    // The checkpoint's template level is already baked into the scene;
    // recover it from the template size.
    let template_level = match scene.template.vertex_count() {
        12 => 0,
        42 => 1,
        162 => 2,
        n => return Err(CliError::Checkpoint(format!("unexpected template size {}", n))),
    };
    save_scene(out, &scene, template_level)?;
    write_history(&out.with_extension("loss.csv"), &outcome.history)?;

    let last_psnr = outcome.history.iter().rev().find_map(|r| r.psnr);
    println!(
        "train-radiance: {} iterations, final loss {:.6}{} -> {}",
        cfg.radiance.iterations,
        outcome.history.last().map(|r| r.loss).unwrap_or(f64::NAN),
        last_psnr.map(|p| format!(", held-out PSNR {:.2} dB", p)).unwrap_or_default(),
        out.display()
    );
    Ok(())
}
