//! Subcommand implementations. Each is a pure function of
//! `(config, inputs, seed)` that writes its outputs and returns.

pub mod bench;
pub mod edit;
pub mod eval;
pub mod fit_shape;
pub mod gen_scene;
pub mod render;
pub mod train_codec;
pub mod train_radiance;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "meshfield",
    about = "Latent-coded deformable mesh primitives for radiance-field rendering",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PresetFlag {
    Full,
    Lightweight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationFlag {
    /// Free per-vertex offsets instead of latent codes.
    DirectShape,
    /// Only the finest hierarchy level.
    NoHierarchy,
    /// Raw sphere templates, no shape optimization at all.
    NoShapeOptim,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scene directory (cloud, cameras, GT renders).
    GenScene {
        #[command(flatten)]
        common: CommonArgs,
        /// Output scene directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the shape autoencoder on the procedural patch database.
    TrainCodec {
        #[command(flatten)]
        common: CommonArgs,
        /// Output codec checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit primitive shapes against the scene's depth maps.
    FitShape {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scene_dir: PathBuf,
        /// Pretrained codec checkpoint.
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        ablation: Option<AblationFlag>,
        #[arg(long, value_enum)]
        preset: Option<PresetFlag>,
    },
    /// Train vertex features, the radiance MLP, and the background.
    TrainRadiance {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scene_dir: PathBuf,
        /// Scene checkpoint from fit-shape.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render views from a checkpoint.
    Render {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scene_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output image directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated view indices; all views when omitted.
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<usize>>,
        /// Must match the checkpoint's MLP preset.
        #[arg(long, value_enum)]
        preset: Option<PresetFlag>,
        /// Also write depth maps next to the images.
        #[arg(long, default_value_t = false)]
        depth: bool,
    },
    /// Apply the config's scene edits to a checkpoint.
    Edit {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare rendered views against ground truth (PSNR/SSIM report).
    Eval {
        /// Directory of ground-truth images.
        #[arg(long)]
        gt: PathBuf,
        /// Directory of rendered images.
        #[arg(long)]
        renders: PathBuf,
        /// Report JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure rendering throughput and peak memory.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scene_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of views to render (cycling the trajectory).
        #[arg(long, default_value_t = 4)]
        views: usize,
    },
}

impl From<PresetFlag> for meshfield_core::radiance::MlpPreset {
    fn from(p: PresetFlag) -> Self {
        match p {
            PresetFlag::Full => meshfield_core::radiance::MlpPreset::Full,
            PresetFlag::Lightweight => meshfield_core::radiance::MlpPreset::Lightweight,
        }
    }
}

/// Load the config file or fall back to defaults.
pub fn load_config(common: &CommonArgs) -> crate::error::Result<crate::config::RunConfig> {
    match &common.config {
        Some(path) => crate::config::RunConfig::load(path),
        None => Ok(crate::config::RunConfig::default()),
    }
}
