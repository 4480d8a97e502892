//! Conditional generation under an observation mask.

mod config;
mod sampler;

pub use config::{transition_schedule, Algorithm, InpaintConfig, Move, PRESETS};
pub use sampler::{
    boundary_discontinuity, copaint_sample, inpaint, observed_max_error, repaint_sample,
    ConditionalSampleResult, InpaintDiagnostics,
};
