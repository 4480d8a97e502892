//! Denoising diffusion: noise schedules, the forward and reverse processes,
//! the training loop, unconditional samplers and checkpoints.

mod checkpoint;
mod process;
mod sample;
mod schedule;
mod train;

use candle_core::{DType, Device, Tensor};

use crate::error::Result;

pub use checkpoint::{Checkpoint, DiffusionConfig};
pub use process::{forward_sample, normal_grid, reverse_step, trajectory_rng, training_loss};
pub(crate) use process::{grids_to_tensor, normal_batch, tensor_to_grids};
pub use sample::{ddim_sample, sample_unconditional, DEFAULT_SAMPLE_BATCH};
pub(crate) use sample::{ddim_update, ddpm_mean};
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use train::{train, TrainConfig, TrainReport, TrainingData};

/// Anything that predicts the noise in a batch of `(N, 1, H, W)` grids.
pub trait Denoiser {
    fn predict_noise(&self, x_t: &Tensor, t: &[usize]) -> Result<Tensor>;
    fn device(&self) -> &Device;
    fn dtype(&self) -> DType;
    /// Diffusion length T the predictor was built for.
    fn max_timestep(&self) -> usize;
    /// Interval the clean-grid prediction `x̂₀` is projected onto during
    /// sampling. `None` samples with the plain reverse-step formula.
    fn x0_range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// A denoiser whose samplers keep `x̂₀` inside `range`.
pub struct RangeLimited<'a> {
    pub inner: &'a dyn Denoiser,
    pub range: (f64, f64),
}

impl Denoiser for RangeLimited<'_> {
    fn predict_noise(&self, x_t: &Tensor, t: &[usize]) -> Result<Tensor> {
        self.inner.predict_noise(x_t, t)
    }
    fn device(&self) -> &Device {
        self.inner.device()
    }
    fn dtype(&self) -> DType {
        self.inner.dtype()
    }
    fn max_timestep(&self) -> usize {
        self.inner.max_timestep()
    }
    fn x0_range(&self) -> Option<(f64, f64)> {
        Some(self.range)
    }
}
