//! Small synthetic seasons (8 locations × 52 weeks) and the model trained on
//! them, bundled under `assets/toy/` so examples and tests run without any
//! downloads or long training.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sha2::{Digest, Sha256};

use crate::dataset::AugmentationConfig;
use crate::diffusion::{Checkpoint, DiffusionConfig, ScheduleKind, TrainConfig, TrainReport};
use crate::encoding::{
    io, IntensityTransform, PadSpec, SeasonFrame, SourceTag, TransformKind, SEASON_WEEKS,
};
use crate::error::Result;
use crate::unet::UNetConfig;

pub const TOY_LOCATIONS: [&str; 8] = ["CA", "FL", "IL", "MD", "NC", "NY", "TX", "WA"];
pub const TOY_FRAMES: usize = 200;
pub const TOY_SEED: u64 = 2024;
/// 52 × 8 already divides by 4, enough for the 3-scale network.
pub const TOY_PAD_MULTIPLE: usize = 4;
pub const TOY_STEPS: usize = 50;
pub const TOY_BASE_CHANNELS: usize = 8;

pub fn toy_locations() -> Vec<String> {
    TOY_LOCATIONS.iter().map(|s| s.to_string()).collect()
}

/// One synthetic season. About 40% of seasons have a second, later wave.
/// Timing is shared across locations up to a small jitter, so locations are
/// strongly correlated within a season.
pub fn toy_season(rng: &mut impl Rng, id: impl Into<String>) -> Result<SeasonFrame> {
    let jitter = Normal::new(0.0, 1.2).expect("valid normal");
    let peak = rng.random_range(14.0..30.0);
    let intensity = rng.random_range(40.0..400.0);
    let width = rng.random_range(3.0..5.5);
    let second = if rng.random_bool(0.4) {
        Some((peak + rng.random_range(9.0..15.0), rng.random_range(0.3..0.8)))
    } else {
        None
    };
    let n_loc = TOY_LOCATIONS.len();
    let mut values = Array2::zeros((SEASON_WEEKS, n_loc));
    for l in 0..n_loc {
        let size = intensity * (0.5 + l as f64 / n_loc as f64) * rng.random_range(0.8..1.2);
        let p1 = peak + jitter.sample(rng);
        let p2 = second.map(|(p, r)| (p + jitter.sample(rng), r));
        for w in 0..SEASON_WEEKS {
            let x = w as f64;
            let mut v = size * (-0.5 * ((x - p1) / width).powi(2)).exp();
            if let Some((p, r)) = p2 {
                v += r * size * (-0.5 * ((x - p) / width).powi(2)).exp();
            }
            values[[w, l]] = ((1.0 + v) * 10.0).round() / 10.0;
        }
    }
    SeasonFrame::new(id, values, toy_locations(), SourceTag::Modeled)
        .map(|f| f.with_provenance("synthetic toy season"))
}

/// `n` toy seasons from a fixed seed.
pub fn generate_toy_frames(n: usize, seed: u64) -> Result<Vec<SeasonFrame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| toy_season(&mut rng, format!("toy-{i:03}"))).collect()
}

/// A season drawn from the same generator but outside the training frames.
pub fn toy_holdout_season(seed: u64) -> Result<SeasonFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    toy_season(&mut rng, format!("toy-holdout-{seed}"))
}

pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

pub fn toy_frames_path() -> PathBuf {
    assets_dir().join("toy/frames.csv")
}

pub fn toy_checkpoint_path() -> PathBuf {
    assets_dir().join("toy/model.safetensors")
}

pub fn toy_season_path() -> PathBuf {
    assets_dir().join("toy/season.csv")
}

pub fn load_toy_frames() -> Result<Vec<SeasonFrame>> {
    io::load_frames(&toy_frames_path(), SourceTag::Modeled)
}

pub fn load_toy_checkpoint() -> Result<Checkpoint> {
    Checkpoint::load(&toy_checkpoint_path(), DType::F32, &Device::Cpu)
}

pub fn toy_pad() -> PadSpec {
    PadSpec::for_shape(SEASON_WEEKS, TOY_LOCATIONS.len(), TOY_PAD_MULTIPLE).expect("valid toy shape")
}

/// Configuration of the bundled toy model: 3-scale ResNet, cosine schedule
/// with 50 steps, square-root transform.
pub fn toy_config(transform: IntensityTransform, manifest_hash: String) -> Result<DiffusionConfig> {
    Ok(DiffusionConfig {
        unet: UNetConfig::variant("U124", TOY_BASE_CHANNELS)?,
        schedule: ScheduleKind::Cosine,
        steps: TOY_STEPS,
        transform,
        pad: toy_pad(),
        locations: toy_locations(),
        manifest_hash,
        train: TrainConfig::default(),
        init_seed: TOY_SEED,
    })
}

/// SHA-256 of the frames' CSV form; stands in for a dataset manifest hash.
pub fn frames_hash(frames: &[SeasonFrame]) -> Result<String> {
    let mut buf = Vec::new();
    io::write_frames(&mut buf, frames, true)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// Train the toy model from scratch: `epochs` epochs of batch 32 at
/// learning rate 2e-3, square-root transform fitted on `frames`.
pub fn train_toy(
    frames: &[SeasonFrame],
    epochs: usize,
    seed: u64,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(Checkpoint, TrainReport)> {
    let transform = IntensityTransform::fit(frames, TransformKind::Sqrt)?;
    let mut config = toy_config(transform, frames_hash(frames)?)?;
    config.train = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    Checkpoint::fit(
        config,
        frames,
        &AugmentationConfig::none(),
        DType::F32,
        &Device::Cpu,
        on_epoch,
    )
}
