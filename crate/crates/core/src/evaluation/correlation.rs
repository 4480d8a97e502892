use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{pearson, quantile};

pub const DEFAULT_PERMUTATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Mean over trajectories of the mean pairwise Pearson r between
    /// locations' weekly series.
    pub mean_r: f64,
    /// The same statistic after shuffling each location's weeks, once per
    /// replicate.
    pub null: Vec<f64>,
    /// Location pairs skipped because one series was constant.
    pub excluded_pairs: usize,
}

impl CorrelationResult {
    pub fn null_quantile(&self, level: f64) -> Result<f64> {
        quantile(&self.null, level)
    }

    pub fn null_mean(&self) -> f64 {
        crate::stats::mean(&self.null)
    }
}

/// Mean pairwise correlation of one weeks × locations grid, and the number
/// of undefined pairs.
fn mean_pairwise(grid: &Array2<f64>) -> (Option<f64>, usize) {
    let cols: Vec<Vec<f64>> = grid.columns().into_iter().map(|c| c.to_vec()).collect();
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            match pearson(&cols[i], &cols[j]) {
                Some(r) => {
                    sum += r;
                    n += 1;
                }
                None => skipped += 1,
            }
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

fn set_mean(grids: &[Array2<f64>]) -> (f64, usize) {
    let mut total = 0.0;
    let mut n = 0;
    let mut skipped = 0;
    for g in grids {
        let (r, s) = mean_pairwise(g);
        skipped += s;
        if let Some(r) = r {
            total += r;
            n += 1;
        }
    }
    (if n > 0 { total / n as f64 } else { f64::NAN }, skipped)
}

/// Cross-location correlation of a trajectory set with a permutation null
/// of `permutations` replicates. Replicate `b` shuffles with its own stream
/// derived from `seed`, so the null does not depend on thread scheduling.
pub fn cross_state_correlation(
    trajectories: &[Array2<f64>],
    permutations: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::invalid("no trajectories"))?;
    let (weeks, locs) = first.dim();
    if locs < 2 || weeks < 3 {
        return Err(Error::invalid(format!(
            "need at least 2 locations and 3 weeks, got {locs} and {weeks}"
        )));
    }
    if trajectories.iter().any(|g| g.dim() != (weeks, locs)) {
        return Err(Error::invalid("trajectories differ in shape"));
    }
    let (mean_r, excluded_pairs) = set_mean(trajectories);
    if mean_r.is_nan() {
        return Err(Error::data("every location pair has a constant series"));
    }
    let null = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let shuffled: Vec<Array2<f64>> = trajectories
                .iter()
                .map(|g| {
                    let mut out = g.clone();
                    for mut col in out.columns_mut() {
                        let mut v = col.to_vec();
                        v.shuffle(&mut rng);
                        col.assign(&ndarray::ArrayView1::from(&v));
                    }
                    out
                })
                .collect();
            set_mean(&shuffled).0
        })
        .collect();
    Ok(CorrelationResult {
        mean_r,
        null,
        excluded_pairs,
    })
}
