use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::encoding::SeasonFrame;
use crate::error::{Error, Result};

/// Training-time enrichment, applied in the fixed order
/// Poisson resampling → circular temporal shift → intensity scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub poisson_resample: bool,
    /// Shift range ±k weeks.
    pub temporal_pad_weeks: usize,
    pub intensity_scale_range: (f64, f64),
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl AugmentationConfig {
    pub fn none() -> Self {
        Self {
            poisson_resample: false,
            temporal_pad_weeks: 0,
            intensity_scale_range: (1.0, 1.0),
        }
    }

    pub fn poisson() -> Self {
        Self {
            poisson_resample: true,
            ..Self::none()
        }
    }

    /// Poisson, ±4 weeks, α ∈ [0.7, 1.3].
    pub fn poisson_pad_scale_narrow() -> Self {
        Self {
            poisson_resample: true,
            temporal_pad_weeks: 4,
            intensity_scale_range: (0.7, 1.3),
        }
    }

    /// Poisson, ±15 weeks, α ∈ [0.1, 1.9].
    pub fn poisson_pad_scale_wide() -> Self {
        Self {
            poisson_resample: true,
            temporal_pad_weeks: 15,
            intensity_scale_range: (0.1, 1.9),
        }
    }

    /// Enrichment schemes by label: `No`, `Pois`, `PoisPadScaleSmall`, `PoisPadScale`.
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "no" | "none" => Ok(Self::none()),
            "pois" => Ok(Self::poisson()),
            "poispadscalesmall" => Ok(Self::poisson_pad_scale_narrow()),
            "poispadscale" => Ok(Self::poisson_pad_scale_wide()),
            other => Err(Error::invalid(format!("unknown enrichment preset '{other}'"))),
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.poisson_resample
            && self.temporal_pad_weeks == 0
            && self.intensity_scale_range == (1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.intensity_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity scale range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            )));
        }
        Ok(())
    }
}

pub fn augment(frame: &SeasonFrame, cfg: &AugmentationConfig, rng: &mut impl Rng) -> Result<SeasonFrame> {
    cfg.validate()?;
    if cfg.is_identity() {
        return Ok(frame.clone());
    }
    let mut values = frame.values().clone();
    if cfg.poisson_resample {
        for v in values.iter_mut() {
            *v = if *v > 0.0 {
                Poisson::new(*v)
                    .map_err(|e| Error::numeric(format!("Poisson({v}): {e}")))?
                    .sample(rng)
            } else {
                0.0
            };
        }
    }
    let k = cfg.temporal_pad_weeks as i64;
    if k > 0 {
        let shift = rng.random_range(-k..=k);
        values = circular_shift(&values, shift);
    }
    let (lo, hi) = cfg.intensity_scale_range;
    let alpha = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    if alpha != 1.0 {
        values.mapv_inplace(|v| v * alpha);
    }
    frame.with_values(values)
}

/// Rotate rows by `shift` weeks: `out[w] = in[(w − shift) mod W]`.
pub fn circular_shift(values: &Array2<f64>, shift: i64) -> Array2<f64> {
    let weeks = values.nrows() as i64;
    Array2::from_shape_fn(values.dim(), |(w, l)| {
        let src = (w as i64 - shift).rem_euclid(weeks) as usize;
        values[[src, l]]
    })
}
