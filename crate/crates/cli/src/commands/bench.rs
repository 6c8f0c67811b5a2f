use std::path::Path;
use std::time::Instant;

use meshfield_core::radiance::render_image;

use crate::commands::CommonArgs;
use crate::error::Result;
use crate::formats::checkpoint::load_scene;
use crate::pipeline::load_scene_dir;

/// Rendering throughput (ms per 1K pixels) and peak resident memory.
/// Numbers are informational; they depend on the host.
pub fn run(_common: &CommonArgs, scene_dir: &Path, checkpoint: &Path, views: usize) -> Result<()> {
    let data = load_scene_dir(scene_dir)?;
    let scene = load_scene(checkpoint, None)?;

    let mut pixels = 0usize;
    let start = Instant::now();
    for i in 0..views {
        let camera = &data.cameras[i % data.cameras.len()];
        let out = render_image(&scene, camera);
        pixels += out.width * out.height;
    }
    let elapsed = start.elapsed().as_secs_f64();

    let ms_per_1k = elapsed * 1000.0 / (pixels as f64 / 1000.0);
    println!(
        "bench: {} views, {} pixels in {:.3} s -> {:.3} ms/1K pixels",
        views, pixels, elapsed, ms_per_1k
    );
    match peak_rss_mb() {
        Some(mb) => println!("bench: peak resident memory {:.1} MB", mb),
        None => println!("bench: peak resident memory unavailable on this platform"),
    }
    Ok(())
}

/// VmHWM from /proc/self/status, Linux only.
fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb / 1024.0);
        }
    }
    None
}
