use serde::{Deserialize, Serialize};

use super::job::ForecastJob;
use crate::encoding::SeasonFrame;
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

pub const QUANTILE_LEVELS: [f64; 23] = [
    0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75,
    0.8, 0.85, 0.9, 0.95, 0.975, 0.99,
];

/// Index of the median in [`QUANTILE_LEVELS`].
pub const MEDIAN_INDEX: usize = 11;

/// Values at the 23 levels for one (location, horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCell {
    pub location: String,
    pub horizon: usize,
    pub values: Vec<f64>,
}

impl QuantileCell {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != QUANTILE_LEVELS.len() {
            return Err(Error::data(format!(
                "{} h{}: {} quantiles, expected {}",
                self.location,
                self.horizon,
                self.values.len(),
                QUANTILE_LEVELS.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::data(format!(
                "{} h{}: quantiles must be finite and nonnegative",
                self.location, self.horizon
            )));
        }
        if self.values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::data(format!(
                "{} h{}: quantiles decrease with level",
                self.location, self.horizon
            )));
        }
        Ok(())
    }

    pub fn median(&self) -> f64 {
        self.values[MEDIAN_INDEX]
    }
}

/// A forecast: one [`QuantileCell`] per (location, horizon), ordered by
/// location then horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub cells: Vec<QuantileCell>,
}

impl QuantileForecast {
    pub fn validate(&self) -> Result<()> {
        self.cells.iter().try_for_each(QuantileCell::validate)
    }

    pub fn get(&self, location: &str, horizon: usize) -> Option<&QuantileCell> {
        self.cells
            .iter()
            .find(|c| c.location == location && c.horizon == horizon)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Quantiles of one sample at the 23 levels (sorted copy, then
/// [`quantile_sorted`]).
pub fn sample_quantiles(sample: &[f64]) -> Result<Vec<f64>> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    QUANTILE_LEVELS.iter().map(|&q| quantile_sorted(&v, q)).collect()
}

/// Per (location, horizon), the ensemble's quantiles of the value in week
/// `reference_week + h − 1`.
pub fn ensemble_to_quantiles(ensemble: &[SeasonFrame], job: &ForecastJob) -> Result<QuantileForecast> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::invalid("cannot summarise an empty ensemble"))?;
    job.validate(first.weeks())?;
    let locations: Vec<String> = if job.locations.is_empty() {
        first.locations().to_vec()
    } else {
        job.locations.clone()
    };
    let mut horizons = job.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let mut cells = Vec::with_capacity(locations.len() * horizons.len());
    for loc in &locations {
        let j = first
            .location_index(loc)
            .ok_or_else(|| Error::invalid(format!("unknown location '{loc}'")))?;
        for &h in &horizons {
            let w = job.target_week(h) - 1;
            let sample: Vec<f64> = ensemble.iter().map(|f| f.values()[[w, j]]).collect();
            cells.push(QuantileCell {
                location: loc.clone(),
                horizon: h,
                values: sample_quantiles(&sample)?,
            });
        }
    }
    Ok(QuantileForecast { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_the_hub_set() {
        assert_eq!(QUANTILE_LEVELS.len(), 23);
        assert_eq!(QUANTILE_LEVELS[MEDIAN_INDEX], 0.5);
        assert!(QUANTILE_LEVELS.windows(2).all(|w| w[0] < w[1]));
        for (a, b) in QUANTILE_LEVELS.iter().zip(QUANTILE_LEVELS.iter().rev()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_sample() {
        assert!(sample_quantiles(&[3.5; 40]).unwrap().iter().all(|&q| q == 3.5));
    }

    #[test]
    fn median_of_1_to_512() {
        let v: Vec<f64> = (1..=512).rev().map(|i| i as f64).collect();
        assert_eq!(sample_quantiles(&v).unwrap()[MEDIAN_INDEX], 256.5);
    }
}
