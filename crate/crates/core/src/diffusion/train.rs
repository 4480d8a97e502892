use std::io::Write;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::process::{grids_to_tensor, training_loss};
use super::schedule::NoiseSchedule;
use crate::dataset::{augment, AugmentationConfig};
use crate::encoding::{encode_frame, IntensityTransform, PadSpec, SeasonFrame};
use crate::error::{Error, Result};
use crate::unet::UNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
        }
    }
}

/// Training samples, either pre-encoded or re-augmented every epoch.
pub enum TrainingData {
    Encoded(Tensor),
    Augmented {
        frames: Vec<SeasonFrame>,
        transform: IntensityTransform,
        pad: PadSpec,
        augmentation: AugmentationConfig,
    },
}

impl TrainingData {
    /// Encode frames once (no augmentation).
    pub fn encode(
        frames: &[SeasonFrame],
        transform: &IntensityTransform,
        pad: &PadSpec,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let grids = frames
            .iter()
            .map(|f| encode_frame(f, transform, pad).map(|g| g.values))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = grids.iter().collect();
        Ok(TrainingData::Encoded(grids_to_tensor(&refs, dtype, device)?))
    }

    pub fn len(&self) -> usize {
        match self {
            TrainingData::Encoded(t) => t.dim(0).unwrap_or(0),
            TrainingData::Augmented { frames, .. } => frames.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn epoch_tensor(&self, rng: &mut ChaCha8Rng, dtype: DType, device: &Device) -> Result<Tensor> {
        match self {
            TrainingData::Encoded(t) => Ok(t.clone()),
            TrainingData::Augmented {
                frames,
                transform,
                pad,
                augmentation,
            } => {
                let grids = frames
                    .iter()
                    .map(|f| {
                        let aug = augment(f, augmentation, rng)?;
                        encode_frame(&aug, transform, pad).map(|g| g.values)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<_> = grids.iter().collect();
                grids_to_tensor(&refs, dtype, device)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "epoch,mean_loss")?;
        for (i, l) in self.epoch_losses.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, l)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimise the noise-prediction loss with Adam. `on_epoch` receives the
/// 1-based epoch and its mean loss.
pub fn train(
    model: &UNet,
    schedule: &NoiseSchedule,
    data: &TrainingData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if schedule.steps() != model.max_timestep() {
        return Err(Error::invalid(format!(
            "schedule has {} steps but the network was built for {}",
            schedule.steps(),
            model.max_timestep()
        )));
    }
    let device = model.params().device().clone();
    let dtype = model.params().dtype();
    let mut opt = AdamW::new(
        model.params().vars(),
        ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = data.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        let epoch_data = data.epoch_tensor(&mut rng, dtype, &device)?;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let idx = Tensor::from_slice(chunk, chunk.len(), &device)?;
            let batch = epoch_data.index_select(&idx, 0)?;
            let loss = training_loss(model, schedule, &batch, &mut rng)?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::numeric(format!(
                    "loss became {value} at epoch {epoch}, batch {b}"
                )));
            }
            opt.backward_step(&loss)?;
            total += value * chunk.len() as f64;
        }
        let mean = total / n as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(report)
}
