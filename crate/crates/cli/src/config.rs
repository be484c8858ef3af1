use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiloss::affinity::MarginOptions;
use tiloss::features::{FeatureConfig, FeatureId};
use tiloss::glyphs::DEFAULT_SIDE;
use tiloss::loss::LossConfig;
use tiloss::trainer::TrainConfig;

use crate::CliError;

/// Everything a run can be configured with. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds every random stream of every subcommand.
    pub seed: u64,
    pub out: PathBuf,
    pub synth: SynthSection,
    pub affinity: AffinitySection,
    pub train: TrainSection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out: PathBuf::from("out"),
            synth: SynthSection::default(),
            affinity: AffinitySection::default(),
            train: TrainSection::default(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub templates: usize,
    pub fonts: usize,
    pub side: usize,
    pub digits: DigitsSection,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            templates: 8,
            fonts: 3,
            side: DEFAULT_SIDE,
            digits: DigitsSection::default(),
        }
    }
}

/// Synthetic MNIST-format digit set written by `synth --digits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigitsSection {
    pub train: usize,
    pub test: usize,
    pub side: usize,
}

impl Default for DigitsSection {
    fn default() -> Self {
        DigitsSection {
            train: 10_000,
            test: 2_000,
            side: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinitySection {
    /// Template manifest; when absent the synthetic set from `synth` is
    /// generated in memory.
    pub manifest: Option<PathBuf>,
    /// Directory manifest paths are relative to; defaults to the manifest's.
    pub root: Option<PathBuf>,
    pub side: usize,
    pub features: Vec<FeatureId>,
    pub feature_config: FeatureConfig,
    pub margins: MarginOptions,
}

impl Default for AffinitySection {
    fn default() -> Self {
        AffinitySection {
            manifest: None,
            root: None,
            side: DEFAULT_SIDE,
            features: FeatureId::ALL.to_vec(),
            feature_config: FeatureConfig::default(),
            margins: MarginOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// IDX files; default to the `synth --digits` output under `out`.
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Class count; defaults to the largest training label plus one.
    pub classes: Option<usize>,
    /// Binary margin cache from `affinity`.
    pub margins: Option<PathBuf>,
    /// `alpha_max` values for `train --sweep-alpha`; 0 trains plain softmax.
    pub sweep_alpha: Vec<f64>,
    pub embeddings: bool,
    /// `seed` is replaced by the run seed.
    pub config: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            classes: None,
            margins: None,
            sweep_alpha: vec![0.0, 0.01, 0.05, 0.1, 0.2],
            embeddings: true,
            config: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub batch_size: usize,
    pub classes: Vec<usize>,
    pub batches: usize,
    pub loss: LossConfig,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            batch_size: 8,
            classes: vec![3, 10, 50],
            batches: 100,
            loss: LossConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
