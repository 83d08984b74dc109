//! Run configuration: one JSON document captures the dataset, model,
//! loss, optimizer, and protocol parameters of a run. The schema is
//! strict — unknown keys are rejected by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use amlab_core::data::{synth_blobs_split, LabeledDataset};
use amlab_core::loss::{LossConfig, LossVariant};
use amlab_core::margin::LambdaSchedule;
use amlab_core::train::{MlpConfig, TrainConfig};

use crate::error::Error;
use crate::idx::{parse_idx, PixelScaling};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

fn default_out_dir() -> String {
    "amlab-out".to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticDataset),
    Idx(IdxDataset),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDataset {
    pub classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Seed for the evaluation split; defaults to the run seed plus one.
    #[serde(default)]
    pub eval_seed: Option<u64>,
}

fn default_spread() -> f64 {
    0.3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxDataset {
    pub images: String,
    pub labels: String,
    /// Evaluation files; default to the training files.
    #[serde(default)]
    pub eval_images: Option<String>,
    #[serde(default)]
    pub eval_labels: Option<String>,
    #[serde(default)]
    pub scaling: ScalingSection,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingSection {
    /// Pixels scaled by 1/255.
    #[default]
    Unit,
    /// Pixels mapped through (x - 128) / 128.
    Centered,
}

impl From<ScalingSection> for PixelScaling {
    fn from(s: ScalingSection) -> PixelScaling {
        match s {
            ScalingSection::Unit => PixelScaling::Unit,
            ScalingSection::Centered => PixelScaling::Centered,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![64, 64],
            embed_dim: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub variant: String,
    pub s: f64,
    pub m_add: f64,
    pub m_mult: u32,
    pub lambda: LambdaSection,
    /// Override the variant's default flag (the no-FN ablation).
    pub feature_norm: Option<bool>,
    pub weight_norm: Option<bool>,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            variant: "am_softmax".to_string(),
            s: 30.0,
            m_add: 0.35,
            m_mult: 4,
            lambda: LambdaSection::default(),
            feature_norm: None,
            weight_norm: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSection {
    pub base: f64,
    pub min: f64,
    pub gamma: f64,
    pub power: f64,
}

impl Default for LambdaSection {
    fn default() -> Self {
        let sched = LambdaSchedule::default();
        LambdaSection {
            base: sched.lambda_base,
            min: sched.lambda_min,
            gamma: sched.gamma,
            power: sched.power,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr_base: f64,
    pub lr_decay_iters: Vec<u64>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub total_iters: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr_base: 0.1,
            lr_decay_iters: vec![1500, 2250],
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            total_iters: 3000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub pair_count: usize,
    pub gallery_per_class: usize,
    pub probe_per_class: usize,
    pub distractor_classes: usize,
    pub far_targets: Vec<f64>,
    pub dir_far_target: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            pair_count: 2000,
            gallery_per_class: 1,
            probe_per_class: 3,
            distractor_classes: 0,
            far_targets: vec![0.01, 0.001],
            dir_far_target: 0.01,
        }
    }
}

/// Which half of a run a dataset is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn build_dataset(&self, split: Split) -> Result<LabeledDataset, Error> {
        match &self.dataset {
            DatasetConfig::Synthetic(synth) => {
                // Both splits share the class centers; only the sample
                // noise is reseeded for eval.
                let sample_seed = match split {
                    Split::Train => self.seed,
                    Split::Eval => synth.eval_seed.unwrap_or(self.seed + 1),
                };
                Ok(synth_blobs_split(
                    synth.classes,
                    synth.dim,
                    synth.samples_per_class,
                    synth.spread,
                    self.seed,
                    sample_seed,
                )?)
            }
            DatasetConfig::Idx(idx) => {
                let (images, labels) = match split {
                    Split::Train => (idx.images.as_str(), idx.labels.as_str()),
                    Split::Eval => (
                        idx.eval_images.as_deref().unwrap_or(&idx.images),
                        idx.eval_labels.as_deref().unwrap_or(&idx.labels),
                    ),
                };
                parse_idx(Path::new(images), Path::new(labels), idx.scaling.into())
            }
        }
    }

    pub fn loss_config(&self) -> Result<LossConfig, Error> {
        let variant = match self.loss.variant.as_str() {
            "softmax" => LossVariant::Softmax,
            "normface" => LossVariant::NormFace,
            "a_softmax" => LossVariant::ASoftmax,
            "am_softmax" => LossVariant::AmSoftmax,
            other => {
                return Err(Error::Config(format!(
                    "unknown loss variant `{other}` (expected softmax, normface, a_softmax, or am_softmax)"
                )))
            }
        };
        let mut config = LossConfig::new(variant);
        config.s = self.loss.s;
        config.m_add = self.loss.m_add;
        config.m_mult = self.loss.m_mult;
        config.lambda_schedule = LambdaSchedule {
            lambda_base: self.loss.lambda.base,
            lambda_min: self.loss.lambda.min,
            gamma: self.loss.lambda.gamma,
            power: self.loss.lambda.power,
        };
        if let Some(fn_flag) = self.loss.feature_norm {
            config.feature_norm = fn_flag;
        }
        if let Some(wn_flag) = self.loss.weight_norm {
            config.weight_norm = wn_flag;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn mlp_config(&self, input_dim: usize) -> Result<MlpConfig, Error> {
        let mut widths = Vec::with_capacity(self.model.hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(&self.model.hidden);
        widths.push(self.model.embed_dim);
        Ok(MlpConfig::new(widths)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr_base: self.train.lr_base,
            lr_decay_iters: self.train.lr_decay_iters.clone(),
            lr_decay_factor: self.train.lr_decay_factor,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            batch_size: self.train.batch_size,
            total_iters: self.train.total_iters,
            seed: self.seed,
        }
    }
}
