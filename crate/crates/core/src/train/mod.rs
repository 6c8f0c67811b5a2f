//! The two optimization stages: latent-code shape fitting against depth
//! maps, then radiance fitting against images with geometry frozen.
//!
//! Both stages are staged strictly: shape fitting touches only the latent
//! codes (or the direct offsets in the ablation), radiance training touches
//! only vertex features, the radiance MLP, and the background color.

mod radiance;
mod shape;

pub use radiance::{
    build_ray_cache, mean_psnr, radiance_loss, train_radiance, CachedHit, ImageView,
    RadianceLeaves, RadianceTrainConfig, RayCache,
};
pub use shape::{fit_shapes, geometry_loss, DepthView, FitConfig, ShapeStep};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// fit_shapes called on a scene whose shape mode has nothing to fit.
    NothingToOptimize,
    NoViews,
    /// Every view lacked overlap between coverage and supervision.
    NoSupervision,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::NothingToOptimize => {
                write!(f, "scene shape mode has no trainable shape parameters")
            }
            TrainError::NoViews => write!(f, "no training views supplied"),
            TrainError::NoSupervision => {
                write!(f, "no view had overlapping coverage and valid supervision")
            }
        }
    }
}

/// One row of a loss history, serialized to CSV by the command-line layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub stage: String,
    pub loss: f64,
    pub psnr: Option<f64>,
}

/// History plus bookkeeping common to both stages.
#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    pub history: Vec<LossRecord>,
    /// Views skipped for lack of coverage/supervision overlap.
    pub skipped_views: usize,
    /// True when a non-finite loss rolled parameters back and stopped the
    /// stage early.
    pub aborted: bool,
}
