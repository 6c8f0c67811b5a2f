use std::path::Path;

use crate::commands::CommonArgs;
use crate::error::Result;
use crate::lock::DirLock;
use crate::synth::{build_scene, materialize};

pub fn run(common: &CommonArgs, out: &Path) -> Result<()> {
    let cfg = super::load_config(common)?;
    let _lock = DirLock::acquire(out)?;
    let scene = build_scene(&cfg.scene, cfg.seed);
    materialize(&scene, &cfg.scene, &cfg.background, out)?;
    println!(
        "gen-scene: {:?} with {} views ({} prims) -> {}",
        cfg.scene.spec,
        scene.cameras.len(),
        scene.prims.len(),
        out.display()
    );
    Ok(())
}
