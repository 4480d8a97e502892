use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::schedule::{NoiseSchedule, ScheduleKind};
use super::RangeLimited;
use super::train::{train, TrainConfig, TrainReport, TrainingData};
use crate::dataset::AugmentationConfig;
use crate::encoding::{IntensityTransform, PadSpec, SeasonFrame};
use crate::error::{Error, Result};
use crate::unet::{UNet, UNetConfig};

const METADATA_KEY: &str = "epidiff.checkpoint";
const FORMAT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained model besides its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub unet: UNetConfig,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub transform: IntensityTransform,
    pub pad: PadSpec,
    pub locations: Vec<String>,
    /// SHA-256 of the dataset manifest the model was trained on.
    pub manifest_hash: String,
    pub train: TrainConfig,
    pub init_seed: u64,
}

/// A trained denoiser with its schedule and encoding.
pub struct Checkpoint {
    pub config: DiffusionConfig,
    pub schedule: NoiseSchedule,
    pub model: UNet,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: DiffusionConfig,
}

impl Checkpoint {
    pub fn new(config: DiffusionConfig, dtype: DType, device: &Device) -> Result<Self> {
        let schedule = NoiseSchedule::new(config.schedule, config.steps)?;
        let model = UNet::new(config.unet.clone(), config.steps, config.init_seed, dtype, device)?;
        Ok(Self {
            config,
            schedule,
            model,
        })
    }

    /// Build a fresh model from `config` and train it on `frames` with
    /// `config.train`. Augmentation, if any, is redrawn every epoch.
    pub fn fit(
        config: DiffusionConfig,
        frames: &[SeasonFrame],
        augmentation: &AugmentationConfig,
        dtype: DType,
        device: &Device,
        on_epoch: impl FnMut(usize, f64),
    ) -> Result<(Self, TrainReport)> {
        let ckpt = Self::new(config, dtype, device)?;
        let cfg = &ckpt.config;
        let data = if augmentation.is_identity() {
            TrainingData::encode(frames, &cfg.transform, &cfg.pad, dtype, device)?
        } else {
            TrainingData::Augmented {
                frames: frames.to_vec(),
                transform: cfg.transform,
                pad: cfg.pad,
                augmentation: augmentation.clone(),
            }
        };
        let report = train(&ckpt.model, &ckpt.schedule, &data, &cfg.train, on_epoch)?;
        Ok((ckpt, report))
    }

    /// The network with samplers limited to the model-space data range
    /// `[scale_lo, scale_hi]` of the fitted transform.
    pub fn denoiser(&self) -> RangeLimited<'_> {
        RangeLimited {
            inner: &self.model,
            range: (self.config.transform.scale_lo, self.config.transform.scale_hi),
        }
    }

    /// Write weights, schedule arrays and the JSON configuration into a single
    /// safetensors file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: HashMap<String, Tensor> = self
            .model
            .params()
            .tensors()
            .into_iter()
            .map(|(k, v)| (format!("model.{k}"), v))
            .collect();
        let dev = Device::Cpu;
        let arrays = [
            ("schedule.beta", self.schedule.betas()),
            ("schedule.alpha_bar", self.schedule.alpha_bars()),
            ("schedule.posterior_var", self.schedule.posterior_variances()),
        ];
        for (name, values) in arrays {
            tensors.insert(name.to_string(), Tensor::from_slice(values, values.len(), &dev)?);
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
        };
        let metadata = HashMap::from([(METADATA_KEY.to_string(), serde_json::to_string(&header)?)]);
        let mut entries: Vec<(String, Tensor)> = tensors.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        safetensors::serialize_to_file(entries, Some(metadata), path)
            .map_err(|e| Error::Checkpoint(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: &Path, dtype: DType, device: &Device) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("reading {}: {e}", path.display())))?;
        let (_, meta) = safetensors::SafeTensors::read_metadata(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let json = meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get(METADATA_KEY))
            .ok_or_else(|| Error::Checkpoint(format!("{} has no configuration header", path.display())))?;
        let header: Header = serde_json::from_str(json)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        let ckpt = Self::new(header.config, dtype, device)?;
        let all = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
        let weights: HashMap<String, Tensor> = all
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("model.").map(|n| (n.to_string(), v.clone())))
            .collect();
        ckpt.model.params().load(&weights)?;
        let stored: Vec<f64> = all
            .get("schedule.alpha_bar")
            .ok_or_else(|| Error::Checkpoint("missing schedule arrays".into()))?
            .to_vec1()?;
        if stored != ckpt.schedule.alpha_bars() {
            return Err(Error::Checkpoint(
                "stored schedule does not match its configuration".into(),
            ));
        }
        Ok(ckpt)
    }
}
