use std::path::Path;

use meshfield_core::radiance::render_image;

use crate::commands::{CommonArgs, PresetFlag};
use crate::error::Result;
use crate::formats::checkpoint::load_scene;
use crate::formats::depth::write_depth;
use crate::formats::image::{write_image, ImageBuf};
use crate::lock::DirLock;
use crate::pipeline::load_scene_dir;

#[allow(clippy::too_many_arguments)]
pub fn run(
    _common: &CommonArgs,
    scene_dir: &Path,
    checkpoint: &Path,
    out: &Path,
    views: Option<&[usize]>,
    preset: Option<PresetFlag>,
    with_depth: bool,
) -> Result<()> {
    let data = load_scene_dir(scene_dir)?;
    let scene = load_scene(checkpoint, preset.map(Into::into))?;

    let _lock = DirLock::acquire(out)?;
    let all: Vec<usize> = (0..data.cameras.len()).collect();
    let selected = views.unwrap_or(&all);

    for &vi in selected {
        let camera = &data.cameras[vi];
        let render = render_image(&scene, camera);
        let img = ImageBuf::new(camera.width, camera.height, render.rgb);
        write_image(&img, &out.join(format!("view_{:03}.png", vi)))?;
        if with_depth {
            write_depth(
                &out.join(format!("view_{:03}.bin", vi)),
                camera.width,
                camera.height,
                &render.depth,
            )?;
        }
    }
    println!("render: {} views -> {}", selected.len(), out.display());
    Ok(())
}
