//! Experiment configuration (JSON) and the shipped presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use somlab_core::nn::AdadeltaParams;
use somlab_core::scae::{ScaeConfig, TrainConfig};
use somlab_core::snn::SnnTopology;
use somlab_core::{SomHyperParams, SubsetSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub data: DataConfig,
    pub extractor: ExtractorConfig,
    pub scaling: FeatureScaling,
    pub som: SomConfig,
    pub labels: LabelConfig,
    pub repetitions: usize,
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory of feature dumps reused across runs with the same
    /// extractor settings.
    #[serde(default)]
    pub feature_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with the four MNIST IDX files. Defaults to
    /// `$SOMLAB_MNIST_DIR`, then `data/mnist` in the workspace.
    #[serde(default)]
    pub mnist_dir: Option<PathBuf>,
    /// Use only the first `n` training images (file order).
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
}

/// Settings for the gradient-trained extractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdadeltaParams,
}

impl Default for GradientTraining {
    fn default() -> Self {
        GradientTraining {
            epochs: 10,
            batch_size: 64,
            optimizer: AdadeltaParams::default(),
        }
    }
}

impl GradientTraining {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtractorConfig {
    Raw,
    Scae { model: ScaeConfig, training: GradientTraining },
    Snn { topology: SnnTopology },
    Cnn { feature_maps: usize, training: GradientTraining },
}

impl ExtractorConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExtractorConfig::Raw => "raw",
            ExtractorConfig::Scae { model, .. } if model.weight_decay == 0.0 && model.activity_decay == 0.0 => "cae",
            ExtractorConfig::Scae { .. } => "scae",
            ExtractorConfig::Snn { .. } => "snn",
            ExtractorConfig::Cnn { .. } => "cnn",
        }
    }

    pub fn feature_maps(&self) -> Option<usize> {
        match self {
            ExtractorConfig::Raw => None,
            ExtractorConfig::Scae { model, .. } => Some(model.feature_maps),
            ExtractorConfig::Snn { topology } => Some(topology.conv2.maps),
            ExtractorConfig::Cnn { feature_maps, .. } => Some(*feature_maps),
        }
    }

    pub fn set_feature_maps(&mut self, maps: usize) -> Result<()> {
        match self {
            ExtractorConfig::Raw => return Err(Error::Config("the raw extractor has no feature maps".into())),
            ExtractorConfig::Scae { model, .. } => model.feature_maps = maps,
            ExtractorConfig::Snn { topology } => topology.conv2.maps = maps,
            ExtractorConfig::Cnn { feature_maps, .. } => *feature_maps = maps,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureScaling {
    None,
    /// Per-dimension min-max to `[0, 1]` using the training ranges.
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SomConfig {
    pub neurons: usize,
    pub hyper: SomHyperParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub fraction: f64,
    #[serde(default)]
    pub stratified: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.som.neurons == 0 {
            return Err(Error::Config("som.neurons must be >= 1".into()));
        }
        if self.data.train_limit == Some(0) || self.data.test_limit == Some(0) {
            return Err(Error::Config("data limits must be >= 1".into()));
        }
        self.som.hyper.validate().map_err(|e| Error::Config(format!("som.hyper: {e}")))?;
        SubsetSpec::new(self.labels.fraction, 0)
            .validate()
            .map_err(|e| Error::Config(format!("labels: {e}")))?;
        match &self.extractor {
            ExtractorConfig::Raw => Ok(()),
            ExtractorConfig::Scae { model, training } => {
                model.validate().map_err(|e| Error::Config(format!("extractor: {e}")))?;
                check_training(training)
            }
            ExtractorConfig::Snn { topology } => topology.validate().map_err(|e| Error::Config(format!("extractor: {e}"))),
            ExtractorConfig::Cnn { feature_maps, training } => {
                if *feature_maps == 0 {
                    return Err(Error::Config("extractor.feature_maps must be >= 1".into()));
                }
                check_training(training)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn check_training(t: &GradientTraining) -> Result<()> {
    if t.batch_size == 0 {
        return Err(Error::Config("training.batch_size must be >= 1".into()));
    }
    Ok(())
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "smoke",
    "raw-desk",
    "raw-full",
    "scae-desk",
    "scae-full",
    "cae-desk",
    "cae-full",
    "snn-desk",
    "snn-full",
    "cnn-desk",
    "cnn-full",
];

const DESK_TRAIN: usize = 10_000;
const REPETITIONS: usize = 10;

fn base(name: &str, extractor: ExtractorConfig) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_owned(),
        data: DataConfig::default(),
        extractor,
        scaling: FeatureScaling::None,
        som: SomConfig {
            neurons: 256,
            hyper: SomHyperParams::default(),
        },
        labels: LabelConfig {
            fraction: 0.01,
            stratified: false,
        },
        repetitions: REPETITIONS,
        seed: 1,
        output_dir: None,
        feature_cache: None,
    }
}

fn desk(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.data.train_limit = Some(DESK_TRAIN);
    cfg.labels.fraction = 0.1;
    cfg
}

fn scae(maps: usize, penalized: bool, epochs: usize) -> ExtractorConfig {
    ExtractorConfig::Scae {
        model: if penalized {
            ScaeConfig {
                feature_maps: maps,
                ..ScaeConfig::default()
            }
        } else {
            ScaeConfig::plain(maps)
        },
        training: GradientTraining {
            epochs,
            ..GradientTraining::default()
        },
    }
}

fn cnn(maps: usize, epochs: usize) -> ExtractorConfig {
    ExtractorConfig::Cnn {
        feature_maps: maps,
        training: GradientTraining {
            epochs,
            ..GradientTraining::default()
        },
    }
}

/// Desk presets run on the first 10k training images with 10% labels;
/// full presets use all of MNIST with 1% labels.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let snn = || ExtractorConfig::Snn {
        topology: SnnTopology::with_feature_maps(64),
    };
    Some(match name {
        "smoke" => {
            let mut c = base(name, ExtractorConfig::Raw);
            c.data.train_limit = Some(2_000);
            c.data.test_limit = Some(1_000);
            c.som.neurons = 16;
            c.som.hyper.epochs = 3;
            c.labels.fraction = 0.1;
            c.repetitions = 2;
            c
        }
        "raw-desk" => desk(base(name, ExtractorConfig::Raw)),
        "raw-full" => base(name, ExtractorConfig::Raw),
        "scae-desk" => desk(base(name, scae(32, true, 10))),
        "scae-full" => base(name, scae(256, true, 100)),
        "cae-desk" => desk(base(name, scae(32, false, 10))),
        "cae-full" => base(name, scae(256, false, 100)),
        "snn-desk" => desk(base(name, snn())),
        "snn-full" => base(name, snn()),
        "cnn-desk" => desk(base(name, cnn(32, 10))),
        "cnn-full" => base(name, cnn(256, 100)),
        _ => return None,
    })
}
