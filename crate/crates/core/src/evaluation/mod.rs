//! Forecast scoring, cross-location correlation diagnostics and the
//! one-at-a-time ablation harness.

mod ablation;
mod correlation;
mod scoring;

pub use ablation::{
    run_ablation, AblationEntry, AblationField, AblationReport, AblationRow, DatasetRow, ModelSpec,
};
pub use correlation::{cross_state_correlation, CorrelationResult, DEFAULT_PERMUTATIONS};
pub use scoring::{
    coverage, read_scores, score_cell, score_forecast, summarize, wis, write_scores, Observations,
    ScoreRecord, ScoreSummary, WisParts,
};
