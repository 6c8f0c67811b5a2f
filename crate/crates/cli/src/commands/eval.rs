use std::path::Path;

use meshfield_core::metrics::{psnr, ssim};

use crate::error::{CliError, Result};
use crate::formats::image::read_image;
use crate::formats::report::{EvalReport, ViewScore};

/// Compare every PNG present in both directories, matched by filename.
pub fn run(gt: &Path, renders: &Path, out: &Path) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(gt)
        .map_err(CliError::io(gt))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Metric(format!("no PNG images in {}", gt.display())));
    }

    let mut views = Vec::new();
    for name in names {
        let render_path = renders.join(&name);
        if !render_path.exists() {
            continue;
        }
        let a = read_image(&gt.join(&name))?;
        let b = read_image(&render_path)?;
        if (a.width, a.height) != (b.width, b.height) {
            return Err(CliError::Metric(format!("size mismatch for {}", name)));
        }
        let p = psnr(&a.rgb, &b.rgb).map_err(|e| CliError::Metric(e.to_string()))?;
        let s = ssim(&a.rgb, &b.rgb, a.width, a.height)
            .map_err(|e| CliError::Metric(e.to_string()))?;
        views.push(ViewScore {
            name: name.trim_end_matches(".png").to_string(),
            psnr_db: if p.is_finite() { Some(p) } else { None },
            ssim: s,
        });
    }
    if views.is_empty() {
        return Err(CliError::Metric("no matching image pairs".into()));
    }

    let report = EvalReport::from_scores(views);
    report.save(out)?;
    match report.mean_psnr_db {
        Some(p) => println!(
            "eval: {} views, mean PSNR {:.2} dB, mean SSIM {:.4} -> {}",
            report.views.len(),
            p,
            report.mean_ssim,
            out.display()
        ),
        None => println!(
            "eval: {} views, identical images (infinite PSNR), mean SSIM {:.4} -> {}",
            report.views.len(),
            report.mean_ssim,
            out.display()
        ),
    }
    Ok(())
}
