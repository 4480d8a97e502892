use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Overwrite the observed cells with noised ground truth at every step.
    Repaint,
    /// Deterministic DDIM steps with gradient refinement of the latent.
    CopaintOddim,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Repaint => "repaint",
            Algorithm::CopaintOddim => "copaint-oddim",
        })
    }
}

/// Names accepted by [`InpaintConfig::preset`].
pub const PRESETS: [&str; 5] = ["j5-tt-r5", "j5-nott-r2", "j10-tt-r2", "repaint", "repaint-tt"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintConfig {
    pub algorithm: Algorithm,
    /// Denoising steps between time-travel revisits.
    pub jump_length: usize,
    pub time_travel: bool,
    /// Gradient steps on the latent at each time index (CoPaint only).
    pub refine_steps: usize,
    pub refine_step_size: f64,
    pub ddim_eta: f64,
    pub n_trajectories: usize,
    /// Extra refinement allowed at the last step to bring observed cells
    /// within `fidelity_tolerance` (CoPaint only).
    pub max_polish_steps: usize,
    pub fidelity_tolerance: f64,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self::copaint(5, true, 5)
    }
}

impl InpaintConfig {
    pub fn copaint(jump_length: usize, time_travel: bool, refine_steps: usize) -> Self {
        Self {
            algorithm: Algorithm::CopaintOddim,
            jump_length,
            time_travel,
            refine_steps,
            refine_step_size: 0.25,
            ddim_eta: 0.0,
            n_trajectories: 512,
            max_polish_steps: 40,
            fidelity_tolerance: 0.02,
        }
    }

    pub fn repaint(jump_length: usize, time_travel: bool) -> Self {
        Self {
            algorithm: Algorithm::Repaint,
            refine_steps: 0,
            max_polish_steps: 0,
            ..Self::copaint(jump_length, time_travel, 0)
        }
    }

    /// `j5-tt-r5`: J = 5 with time travel and 5 refinement steps;
    /// `j5-nott-r2`: J = 5, no time travel, 2 steps;
    /// `j10-tt-r2`: J = 10 with time travel, 2 steps;
    /// `repaint` / `repaint-tt`: overwrite sampling without / with time travel.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "j5-tt-r5" => Ok(Self::copaint(5, true, 5)),
            "j5-nott-r2" => Ok(Self::copaint(5, false, 2)),
            "j10-tt-r2" => Ok(Self::copaint(10, true, 2)),
            "repaint" => Ok(Self::repaint(5, false)),
            "repaint-tt" => Ok(Self::repaint(5, true)),
            other => Err(Error::invalid(format!(
                "unknown inpainting preset '{other}' (expected one of {PRESETS:?})"
            ))),
        }
    }

    pub fn with_trajectories(mut self, n: usize) -> Self {
        self.n_trajectories = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.jump_length == 0 {
            return Err(Error::invalid("jump_length must be at least 1"));
        }
        if !(self.refine_step_size > 0.0 && self.refine_step_size.is_finite()) {
            return Err(Error::invalid("refine_step_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ddim_eta) {
            return Err(Error::invalid(format!("ddim_eta {} outside [0, 1]", self.ddim_eta)));
        }
        if !(self.fidelity_tolerance > 0.0) {
            return Err(Error::invalid("fidelity_tolerance must be positive"));
        }
        Ok(())
    }
}

/// One move of the sampler's time walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Denoise `x_t → x_{t−1}`.
    Denoise(usize),
    /// Re-noise `x_{t−1} → x_t`.
    Renoise(usize),
}

/// The walk from `T` to 0. With time travel, every `J` denoising steps the
/// sample is pushed back one step and that step is redone.
pub fn transition_schedule(steps: usize, jump_length: usize, time_travel: bool) -> Vec<Move> {
    let mut out = Vec::with_capacity(steps + steps / jump_length.max(1) * 2);
    for (k, t) in (1..=steps).rev().enumerate() {
        out.push(Move::Denoise(t));
        if time_travel && (k + 1) % jump_length.max(1) == 0 && t > 1 {
            out.push(Move::Renoise(t));
            out.push(Move::Denoise(t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_without_travel_is_plain() {
        let s = transition_schedule(6, 2, false);
        let expect: Vec<Move> = (1..=6).rev().map(Move::Denoise).collect();
        assert_eq!(s, expect);
    }

    #[test]
    fn schedule_with_travel_revisits() {
        use Move::*;
        let s = transition_schedule(4, 2, true);
        assert_eq!(
            s,
            vec![Denoise(4), Denoise(3), Renoise(3), Denoise(3), Denoise(2), Denoise(1)]
        );
        // every step is eventually taken and the walk ends at zero
        let mut t = 50usize;
        for m in transition_schedule(50, 5, true) {
            match m {
                Denoise(s) => {
                    assert_eq!(s, t);
                    t -= 1;
                }
                Renoise(s) => {
                    assert_eq!(s, t + 1);
                    t += 1;
                }
            }
        }
        assert_eq!(t, 0);
    }

    #[test]
    fn presets_resolve() {
        for p in PRESETS {
            InpaintConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(InpaintConfig::preset("j7").is_err());
        let c = InpaintConfig::preset("j10-tt-r2").unwrap();
        assert_eq!((c.jump_length, c.time_travel, c.refine_steps), (10, true, 2));
    }
}
