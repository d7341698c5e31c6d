//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! variant = "tiny"
//! branches = 4
//! fusion_weights = [1.0, 1.0, 1.0, 1.0]
//!
//! [finetune]
//! learning_rate = 0.05
//! epochs = 300
//! ```
//!
//! Every section and key is optional. The top-level `seed` is the only seed:
//! it drives synthesis, the subject split, model initialization and batch order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::data::SynthConfig;
use crate::error::{Result, SegError};
use crate::infer::Thresholds;
use crate::model::{BackboneConfig, FusionWeights, ModelSpec, Preprocess, Variant};
use crate::train::{TrainConfig, TrainPhase};

pub const CONFIG_ENV: &str = "SEGDENSE_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub output_dir: Option<PathBuf>,
    /// Manifest read by `prepare`.
    pub manifest: Option<PathBuf>,
    /// Relative to the output directory.
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: Variant,
    /// Overrides for the variant's defaults.
    pub growth_rate: Option<usize>,
    pub block_layer_counts: Option<[usize; 4]>,
    pub stem_channels: Option<usize>,
    pub bn_size: Option<usize>,
    pub pretrained_init: bool,
    pub pretrained_path: Option<PathBuf>,
    pub branches: usize,
    pub fusion_weights: [f64; 4],
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::Tiny,
            growth_rate: None,
            block_layer_counts: None,
            stem_channels: None,
            bn_size: None,
            pretrained_init: false,
            pretrained_path: None,
            branches: 4,
            fusion_weights: FusionWeights::default().0,
        }
    }
}

/// Per-phase optimizer settings; the seed and phase come from elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint_interval: usize,
}

impl Default for PhaseSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            epochs: t.epochs,
            batch_size: t.batch_size,
            checkpoint_interval: t.checkpoint_interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub width: usize,
    pub height: usize,
    pub pupil_radius: (f64, f64),
    pub iris_radius: (f64, f64),
    pub occlusion: bool,
    pub specular: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            width: s.width,
            height: s.height,
            pupil_radius: s.pupil_radius,
            iris_radius: s.iris_radius,
            occlusion: s.occlusion,
            specular: s.specular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub paths: PathsConfig,
    pub model: ModelSection,
    pub preprocess: Preprocess,
    pub augment: AugmentConfig,
    pub pretrain: PhaseSection,
    pub finetune: PhaseSection,
    pub thresholds: Thresholds,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_fraction: 0.7,
            paths: PathsConfig::default(),
            model: ModelSection::default(),
            preprocess: Preprocess::default(),
            augment: AugmentConfig::default(),
            pretrain: PhaseSection::default(),
            finetune: PhaseSection::default(),
            thresholds: Thresholds::default(),
            synth: SynthSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SegError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SegError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| SegError::Config(format!("{}: {e}", path.display())))
    }

    /// `explicit`, else `$SEGDENSE_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SegError::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.model_spec().validate()?;
        self.augment.validate()?;
        self.thresholds.validate()?;
        for phase in [TrainPhase::Pretrain, TrainPhase::Finetune] {
            self.train_config(phase).validate()?;
        }
        if self.preprocess.std.iter().any(|&s| !(s > 0.0)) {
            return Err(SegError::Config("preprocess std must be positive".into()));
        }
        Ok(())
    }

    pub fn backbone(&self) -> BackboneConfig {
        let m = &self.model;
        let mut b = BackboneConfig::for_variant(m.variant);
        b.growth_rate = m.growth_rate.unwrap_or(b.growth_rate);
        b.block_layer_counts = m.block_layer_counts.unwrap_or(b.block_layer_counts);
        b.stem_channels = m.stem_channels.unwrap_or(b.stem_channels);
        b.bn_size = m.bn_size.unwrap_or(b.bn_size);
        b.pretrained_init = m.pretrained_init;
        b.pretrained_path = m.pretrained_path.clone();
        b
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            backbone: self.backbone(),
            branches: self.model.branches,
            fusion: FusionWeights(self.model.fusion_weights),
            preprocess: self.preprocess,
        }
    }

    pub fn train_config(&self, phase: TrainPhase) -> TrainConfig {
        let s = match phase {
            TrainPhase::Pretrain => &self.pretrain,
            TrainPhase::Finetune => &self.finetune,
        };
        TrainConfig {
            learning_rate: s.learning_rate,
            momentum: s.momentum,
            epochs: s.epochs,
            batch_size: s.batch_size,
            seed: self.seed,
            phase,
            checkpoint_interval: s.checkpoint_interval,
            init_checkpoint: None,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            width: s.width,
            height: s.height,
            pupil_radius: s.pupil_radius,
            iris_radius: s.iris_radius,
            occlusion: s.occlusion,
            specular: s.specular,
            ..SynthConfig::default()
        }
    }
}
