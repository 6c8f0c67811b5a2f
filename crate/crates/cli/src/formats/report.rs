//! Evaluation reports as JSON. A `null` PSNR marks the infinite-PSNR
//! sentinel (bit-identical images), since JSON has no Infinity literal.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViewScore {
    pub name: String,
    /// dB; `None` means the images were identical (infinite PSNR).
    pub psnr_db: Option<f64>,
    pub ssim: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    /// `None` when any view had infinite PSNR.
    pub mean_psnr_db: Option<f64>,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn from_scores(views: Vec<ViewScore>) -> Self {
        let any_inf = views.iter().any(|v| v.psnr_db.is_none());
        let mean_psnr_db = if any_inf || views.is_empty() {
            None
        } else {
            Some(views.iter().map(|v| v.psnr_db.unwrap()).sum::<f64>() / views.len() as f64)
        };
        let mean_ssim = if views.is_empty() {
            0.0
        } else {
            views.iter().map(|v| v.ssim).sum::<f64>() / views.len() as f64
        };
        EvalReport { views, mean_psnr_db, mean_ssim }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Parse { path: path.into(), line: 0, message: e.to_string() })
    }
}
