use std::path::Path;

use meshfield_core::scene::Aabb;

use crate::commands::CommonArgs;
use crate::config::BoxSpec;
use crate::error::{CliError, Result};
use crate::formats::checkpoint::{load_scene, save_scene};

fn to_aabb(b: &BoxSpec) -> Aabb {
    Aabb { lo: b.lo, hi: b.hi }
}

/// Broadcast a 1-element vector to the feature width.
fn broadcast(v: &[f64], dim: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(CliError::Config(format!(
            "feature edit {} has {} entries, expected 1 or {}",
            what, n, dim
        ))),
    }
}

pub fn run(common: &CommonArgs, checkpoint: &Path, out: &Path) -> Result<()> {
    let cfg = super::load_config(common)?;
    let mut scene = load_scene(checkpoint, None)?;
    let template_level = match scene.template.vertex_count() {
        12 => 0,
        42 => 1,
        162 => 2,
        n => return Err(CliError::Checkpoint(format!("unexpected template size {}", n))),
    };

    let mut removed = 0;
    for region in &cfg.edit.remove {
        removed += scene.remove_primitives(&to_aabb(region));
    }

    let mut inserted = 0;
    for spec in &cfg.edit.insert {
        let donor = match &spec.donor {
            Some(path) => load_scene(Path::new(path), None)?,
            None => scene.clone(),
        };
        inserted += scene
            .insert_primitives(&donor, &to_aabb(&spec.region), spec.offset)
            .map_err(|e| CliError::Scene(e.to_string()))?;
    }

    let mut edited = 0;
    for spec in &cfg.edit.feature_edits {
        let scale = broadcast(&spec.scale, scene.feature_dim, "scale")?;
        let offset = broadcast(&spec.offset, scene.feature_dim, "offset")?;
        edited += scene.edit_features(&to_aabb(&spec.region), &scale, &offset);
    }

    save_scene(out, &scene, template_level)?;
    println!(
        "edit: removed {} prims, inserted {}, edited {} feature rows -> {}",
        removed,
        inserted,
        edited,
        out.display()
    );
    Ok(())
}
