use serde::{Deserialize, Serialize};

use crate::diffusion::Checkpoint;
use crate::encoding::{decode_grid, encode_frame, make_mask, MaskSpec, SeasonFrame};
use crate::error::{Error, Result};
use crate::inpaint::{inpaint, Algorithm, InpaintConfig, InpaintDiagnostics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastJob {
    /// First hidden week (1-based); weeks before it are observed.
    pub reference_week: usize,
    pub horizons: Vec<usize>,
    /// Locations to report; empty means all.
    #[serde(default)]
    pub locations: Vec<String>,
    pub n_trajectories: usize,
    pub inpaint: InpaintConfig,
    pub seed: u64,
}

impl ForecastJob {
    pub fn new(reference_week: usize) -> Self {
        Self {
            reference_week,
            horizons: vec![1, 2, 3, 4],
            locations: Vec::new(),
            n_trajectories: 512,
            inpaint: InpaintConfig::default(),
            seed: 0,
        }
    }

    /// Season week (1-based) read for horizon `h`: horizon 1 is the first
    /// hidden week.
    pub fn target_week(&self, h: usize) -> usize {
        self.reference_week + h - 1
    }

    pub fn validate(&self, weeks: usize) -> Result<()> {
        if self.reference_week == 0 || self.reference_week > weeks {
            return Err(Error::invalid(format!(
                "reference week {} outside [1, {weeks}]",
                self.reference_week
            )));
        }
        if self.reference_week == weeks {
            return Err(Error::invalid(format!(
                "reference week {weeks} leaves nothing to forecast"
            )));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::invalid("horizons must be a nonempty list of positive integers"));
        }
        let max_h = *self.horizons.iter().max().expect("nonempty");
        if self.reference_week + max_h > weeks {
            return Err(Error::invalid(format!(
                "reference week {} + horizon {max_h} runs past week {weeks}",
                self.reference_week
            )));
        }
        if self.n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories must be positive"));
        }
        self.inpaint.validate()
    }
}

/// Decoded conditional trajectories for one forecast job.
#[derive(Debug, Clone)]
pub struct ForecastEnsemble {
    pub frames: Vec<SeasonFrame>,
    pub diagnostics: InpaintDiagnostics,
}

/// Condition the model on weeks before `job.reference_week` of
/// `season_so_far` and decode every trajectory back to incidence. Values of
/// `season_so_far` from the reference week on are ignored.
pub fn run_forecast(ckpt: &Checkpoint, season_so_far: &SeasonFrame, job: &ForecastJob) -> Result<ForecastEnsemble> {
    let cfg = &ckpt.config;
    job.validate(cfg.pad.weeks)?;
    if season_so_far.locations() != cfg.locations.as_slice() {
        return Err(Error::data(format!(
            "season locations {:?} do not match the model's {:?}",
            season_so_far.locations(),
            cfg.locations
        )));
    }
    if season_so_far.weeks() != cfg.pad.weeks {
        return Err(Error::data(format!(
            "season has {} weeks, model expects {}",
            season_so_far.weeks(),
            cfg.pad.weeks
        )));
    }
    for code in &job.locations {
        if !cfg.locations.contains(code) {
            return Err(Error::invalid(format!("unknown location '{code}'")));
        }
    }
    let mask = make_mask(
        &MaskSpec::PastOnly {
            reference_week: job.reference_week,
        },
        cfg.pad.weeks,
        &cfg.locations,
    )?;
    let observed = encode_frame(season_so_far, &cfg.transform, &cfg.pad)?;
    let icfg = job.inpaint.clone().with_trajectories(job.n_trajectories);
    let result = inpaint(&ckpt.denoiser(), &ckpt.schedule, &observed, &mask, &icfg, job.seed)?;
    let exact = icfg.algorithm == Algorithm::Repaint;
    let frames = result
        .grids
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let f = decode_grid(
                g,
                &cfg.transform,
                format!("{}-traj{i:04}", season_so_far.id()),
                &cfg.locations,
                season_so_far.source(),
            )?;
            if !exact {
                return Ok(f);
            }
            // the overwrite sampler reproduces observed cells exactly
            let mut values = f.values().clone();
            for ((w, l), v) in values.indexed_iter_mut() {
                if mask.is_observed(w, l) {
                    *v = season_so_far.values()[[w, l]];
                }
            }
            f.with_values(values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastEnsemble {
        frames,
        diagnostics: result.diagnostics,
    })
}
