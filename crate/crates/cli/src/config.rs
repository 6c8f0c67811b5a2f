//! The declarative run description every subcommand consumes. A config file
//! is JSON; omitted fields take the defaults below, and unknown fields are
//! rejected so typos fail loudly before any work starts.

use std::path::Path;

use meshfield_core::fmath;
use meshfield_core::radiance::MlpPreset;
use meshfield_core::scene::{SceneConfig, ShapeMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneGenConfig,
    pub hierarchy: HierarchyConfig,
    pub features: FeatureConfig,
    pub mlp: MlpConfig,
    pub codec: CodecConfig,
    pub fit: FitStageConfig,
    pub radiance: RadianceStageConfig,
    pub background: [f64; 3],
    pub edit: EditConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            scene: SceneGenConfig::default(),
            hierarchy: HierarchyConfig::default(),
            features: FeatureConfig::default(),
            mlp: MlpConfig::default(),
            codec: CodecConfig::default(),
            fit: FitStageConfig::default(),
            radiance: RadianceStageConfig::default(),
            background: [0.2, 0.25, 0.35],
            edit: EditConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SceneSpecName {
    Quad,
    RoomCorner,
    StreetStrip,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SceneGenConfig {
    pub spec: SceneSpecName,
    pub width: usize,
    pub height: usize,
    pub views: usize,
    /// Every `test_every`-th view (starting at 0) is held out of training.
    pub test_every: usize,
    pub cloud_points: usize,
    /// Fraction of valid depth pixels to drop into the masked depth set;
    /// `None` skips writing it.
    pub depth_dropout: Option<f64>,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            spec: SceneSpecName::Quad,
            width: 64,
            height: 48,
            views: 8,
            test_every: 4,
            cloud_points: 4000,
            depth_dropout: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyConfig {
    pub voxel_sizes: Vec<f64>,
    pub j_nearest: Vec<usize>,
    pub radius_scale: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            voxel_sizes: vec![0.5, 1.0],
            j_nearest: vec![4, 2],
            radius_scale: fmath::sqrt(3.0) / 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub dim: usize,
    pub init_freq: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { dim: 21, init_freq: 3 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Full,
    Lightweight,
}

impl From<PresetName> for MlpPreset {
    fn from(p: PresetName) -> Self {
        match p {
            PresetName::Full => MlpPreset::Full,
            PresetName::Lightweight => MlpPreset::Lightweight,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub preset: PresetName,
    pub feature_pe_freq: usize,
    pub view_pe_freq: usize,
    /// Ablation toggles: disabling an encoding feeds the raw vector.
    pub encode_features: bool,
    pub encode_view: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            preset: PresetName::Full,
            feature_pe_freq: 4,
            view_pe_freq: 4,
            encode_features: true,
            encode_view: true,
        }
    }
}

impl MlpConfig {
    pub fn effective_feature_freq(&self) -> usize {
        if self.encode_features {
            self.feature_pe_freq
        } else {
            0
        }
    }

    pub fn effective_view_freq(&self) -> usize {
        if self.encode_view {
            self.view_pe_freq
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub db_size: usize,
    pub db_seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub chamfer_samples: usize,
    pub encoder_samples: usize,
    pub w_normal: f64,
    pub w_lap: f64,
    pub template_level: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            db_size: 500,
            db_seed: 11,
            epochs: 200,
            lr: 1e-3,
            // Denser sampling than the library default: the chamfer
            // estimate's noise floor scales with sample count, and scene
            // fitting inherits whatever precision the codec reaches.
            chamfer_samples: 512,
            encoder_samples: 192,
            w_normal: 0.1,
            w_lap: 0.1,
            template_level: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FitStageConfig {
    pub iterations: usize,
    pub lr: f64,
    pub log_every: usize,
    /// Read depth maps from the dropout-masked set instead of the full one.
    pub use_dropout_depth: bool,
}

impl Default for FitStageConfig {
    fn default() -> Self {
        FitStageConfig { iterations: 500, lr: 1e-2, log_every: 25, use_dropout_depth: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RadianceStageConfig {
    pub iterations: usize,
    pub lr: f64,
    pub rays_per_step: usize,
    pub log_every: usize,
    pub eval_every: usize,
}

impl Default for RadianceStageConfig {
    fn default() -> Self {
        RadianceStageConfig {
            iterations: 2000,
            lr: 5e-4,
            rays_per_step: 256,
            log_every: 50,
            eval_every: 500,
        }
    }
}

/// Scene edits applied by the `edit` subcommand, in order: removals,
/// insertions, then feature edits.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EditConfig {
    pub remove: Vec<BoxSpec>,
    pub insert: Vec<InsertSpec>,
    pub feature_edits: Vec<FeatureEditSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InsertSpec {
    /// Checkpoint to copy primitives from; omitted means the scene itself.
    #[serde(default)]
    pub donor: Option<String>,
    pub region: BoxSpec,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FeatureEditSpec {
    pub region: BoxSpec,
    /// Per-channel scale; a single element broadcasts to every channel.
    pub scale: Vec<f64>,
    /// Per-channel offset; same broadcast rule.
    pub offset: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check cross-field constraints before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.hierarchy.voxel_sizes.is_empty() {
            return Err(CliError::Config("hierarchy.voxel_sizes is empty".into()));
        }
        if self.hierarchy.voxel_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(
                "hierarchy.voxel_sizes must be strictly increasing".into(),
            ));
        }
        if self.hierarchy.j_nearest.len() != self.hierarchy.voxel_sizes.len() {
            return Err(CliError::Config(
                "hierarchy.j_nearest must have one entry per voxel size".into(),
            ));
        }
        if self.hierarchy.j_nearest.iter().any(|&j| j == 0) {
            return Err(CliError::Config("j_nearest entries must be positive".into()));
        }
        let expected = 3 + 6 * self.features.init_freq;
        if self.features.dim != expected {
            return Err(CliError::Config(format!(
                "features.dim {} does not match 3 + 6 * init_freq = {}",
                self.features.dim, expected
            )));
        }
        if self.codec.template_level > 2 {
            return Err(CliError::Config("codec.template_level must be 0..=2".into()));
        }
        if self.scene.views == 0 || self.scene.width == 0 || self.scene.height == 0 {
            return Err(CliError::Config("scene dimensions and view count must be positive".into()));
        }
        if let Some(p) = self.scene.depth_dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(CliError::Config("scene.depth_dropout must be in [0, 1)".into()));
            }
        }
        if self.scene.test_every == 0 {
            return Err(CliError::Config("scene.test_every must be positive".into()));
        }
        for (name, v) in [
            ("codec.lr", self.codec.lr),
            ("fit.lr", self.fit.lr),
            ("radiance.lr", self.radiance.lr),
        ] {
            if !(v >= 0.0) {
                return Err(CliError::Config(format!("{} must be non-negative", name)));
            }
        }
        if self.radiance.rays_per_step == 0 {
            return Err(CliError::Config("radiance.rays_per_step must be positive".into()));
        }
        Ok(())
    }

    /// The core-side scene construction config, after CLI overrides.
    pub fn scene_config(&self, shape_mode: ShapeMode, no_hierarchy: bool) -> SceneConfig {
        let (sizes, js) = if no_hierarchy {
            (
                vec![self.hierarchy.voxel_sizes[0]],
                vec![self.hierarchy.j_nearest[0]],
            )
        } else {
            (self.hierarchy.voxel_sizes.clone(), self.hierarchy.j_nearest.clone())
        };
        SceneConfig {
            voxel_sizes: sizes,
            j_nearest: js,
            feature_dim: self.features.dim,
            feature_init_freq: self.features.init_freq,
            radius_scale: self.hierarchy.radius_scale,
            shape_mode,
            background_color: self.background,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn default_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: std::result::Result<RunConfig, _> =
            serde_json::from_str(r#"{"sedd": 3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn mismatched_feature_dim_rejected() {
        let mut cfg = RunConfig::default();
        cfg.features.dim = 20;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_increasing_sizes_rejected() {
        let mut cfg = RunConfig::default();
        cfg.hierarchy.voxel_sizes = vec![1.0, 0.5];
        assert!(cfg.validate().is_err());
    }
}
