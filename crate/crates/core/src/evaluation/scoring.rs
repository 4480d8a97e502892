use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{target_end_date, HubForecast, QuantileCell, MEDIAN_INDEX, QUANTILE_LEVELS};

/// WIS and its parts for one forecast cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WisParts {
    pub wis: f64,
    pub dispersion: f64,
    pub underprediction: f64,
    pub overprediction: f64,
}

fn check_quantiles(q: &[f64]) -> Result<()> {
    if q.len() != QUANTILE_LEVELS.len() {
        return Err(Error::invalid(format!(
            "expected {} quantiles, got {}",
            QUANTILE_LEVELS.len(),
            q.len()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("quantiles must be finite"));
    }
    if q.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("quantiles must be nondecreasing in level"));
    }
    Ok(())
}

/// Weighted interval score over the 23 standard levels, as the mean pinball
/// loss `(1/23) Σ 2(1{y ≤ q_τ} − τ)(q_τ − y)`, split into dispersion,
/// underprediction (`y` above the intervals) and overprediction.
pub fn wis(quantiles: &[f64], y: f64) -> Result<WisParts> {
    check_quantiles(quantiles)?;
    if !y.is_finite() {
        return Err(Error::invalid("observation must be finite"));
    }
    let k = QUANTILE_LEVELS.len();
    let n = k as f64;
    let (mut disp, mut under, mut over) = (0.0, 0.0, 0.0);
    for i in 0..MEDIAN_INDEX {
        let tau = QUANTILE_LEVELS[i];
        let (lo, hi) = (quantiles[i], quantiles[k - 1 - i]);
        disp += 2.0 * tau * (hi - lo);
        over += 2.0 * (lo - y).max(0.0);
        under += 2.0 * (y - hi).max(0.0);
    }
    let m = quantiles[MEDIAN_INDEX];
    over += (m - y).max(0.0);
    under += (y - m).max(0.0);
    let (dispersion, underprediction, overprediction) = (disp / n, under / n, over / n);
    Ok(WisParts {
        wis: dispersion + underprediction + overprediction,
        dispersion,
        underprediction,
        overprediction,
    })
}

/// Whether `y` lies in the central `level`% interval (e.g. 50 or 90).
pub fn coverage(quantiles: &[f64], y: f64, level: u32) -> Result<bool> {
    check_quantiles(quantiles)?;
    let tau = (1.0 - level as f64 / 100.0) / 2.0;
    let find = |t: f64| QUANTILE_LEVELS.iter().position(|&q| (q - t).abs() < 1e-12);
    match (find(tau), find(1.0 - tau)) {
        (Some(lo), Some(hi)) if level > 0 && level < 100 => {
            Ok(quantiles[lo] <= y && y <= quantiles[hi])
        }
        _ => Err(Error::invalid(format!(
            "no {level}% central interval among the standard levels"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub reference_date: NaiveDate,
    pub location: String,
    pub horizon: usize,
    pub observed: f64,
    pub wis: f64,
    pub dispersion: f64,
    pub underprediction: f64,
    pub overprediction: f64,
    pub covered_50: bool,
    pub covered_90: bool,
    pub abs_error_median: f64,
}

pub fn score_cell(cell: &QuantileCell, y: f64, reference_date: NaiveDate) -> Result<ScoreRecord> {
    let parts = wis(&cell.values, y)?;
    Ok(ScoreRecord {
        reference_date,
        location: cell.location.clone(),
        horizon: cell.horizon,
        observed: y,
        wis: parts.wis,
        dispersion: parts.dispersion,
        underprediction: parts.underprediction,
        overprediction: parts.overprediction,
        covered_50: coverage(&cell.values, y, 50)?,
        covered_90: coverage(&cell.values, y, 90)?,
        abs_error_median: (cell.median() - y).abs(),
    })
}

/// Observed values keyed by `(location, target_end_date)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observations(pub BTreeMap<(String, NaiveDate), f64>);

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    location: String,
    target_end_date: NaiveDate,
    value: f64,
}

impl Observations {
    pub fn insert(&mut self, location: impl Into<String>, date: NaiveDate, value: f64) {
        self.0.insert((location.into(), date), value);
    }

    pub fn get(&self, location: &str, date: NaiveDate) -> Option<f64> {
        self.0.get(&(location.to_string(), date)).copied()
    }

    /// CSV with columns `location,target_end_date,value`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut out = Self::default();
        for row in csv::Reader::from_reader(reader).deserialize::<ObservationRow>() {
            let row = row?;
            if !row.value.is_finite() {
                return Err(Error::data(format!("non-finite observation for {}", row.location)));
            }
            out.insert(row.location, row.target_end_date, row.value);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for ((location, date), value) in &self.0 {
            w.serialize(ObservationRow {
                location: location.clone(),
                target_end_date: *date,
                value: *value,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Score every cell of a hub forecast; every cell needs an observation.
pub fn score_forecast(hf: &HubForecast, obs: &Observations) -> Result<Vec<ScoreRecord>> {
    hf.forecast
        .cells
        .iter()
        .map(|cell| {
            let date = target_end_date(hf.reference_date, cell.horizon);
            let y = obs.get(&cell.location, date).ok_or_else(|| {
                Error::data(format!("no observation for {} on {date}", cell.location))
            })?;
            score_cell(cell, y, hf.reference_date)
        })
        .collect()
}

pub fn write_scores<W: Write>(writer: W, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores<R: Read>(reader: R) -> Result<Vec<ScoreRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Totals over a set of scored cells. Both the sum and the mean of WIS are
/// reported, since either is used as "total" in practice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n_cells: usize,
    pub wis_sum: f64,
    pub wis_mean: f64,
    pub coverage_50: f64,
    pub coverage_90: f64,
}

pub fn summarize(records: &[ScoreRecord]) -> ScoreSummary {
    let n = records.len();
    let wis_sum: f64 = records.iter().map(|r| r.wis).sum();
    let frac = |f: fn(&ScoreRecord) -> bool| {
        if n == 0 {
            f64::NAN
        } else {
            records.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    ScoreSummary {
        n_cells: n,
        wis_sum,
        wis_mean: if n == 0 { f64::NAN } else { wis_sum / n as f64 },
        coverage_50: frac(|r| r.covered_50),
        coverage_90: frac(|r| r.covered_90),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pinball(q: &[f64], y: f64) -> f64 {
        let mut s = 0.0;
        for (tau, qv) in QUANTILE_LEVELS.iter().zip(q) {
            let ind = if y <= *qv { 1.0 } else { 0.0 };
            s += 2.0 * (ind - tau) * (qv - y);
        }
        s / 23.0
    }

    #[test]
    fn perfect_forecast_scores_zero() {
        let p = wis(&[4.0; 23], 4.0).unwrap();
        assert_eq!(p.wis, 0.0);
    }

    #[test]
    fn matches_pinball_on_a_grid() {
        let q: Vec<f64> = (0..23).map(|k| (k as f64).powf(1.3)).collect();
        for y in [-3.0, 0.0, 2.5, 7.0, 30.0, 100.0] {
            let p = wis(&q, y).unwrap();
            assert!((p.wis - pinball(&q, y)).abs() < 1e-12);
            let sum = p.dispersion + p.underprediction + p.overprediction;
            assert!((sum - p.wis).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_monotone() {
        let mut q = vec![1.0; 23];
        q[5] = 0.5;
        assert!(wis(&q, 1.0).is_err());
    }

    #[test]
    fn coverage_levels() {
        let q: Vec<f64> = (0..23).map(|k| k as f64).collect();
        assert!(coverage(&q, 11.0, 50).unwrap());
        assert!(coverage(&q, 11.0, 90).unwrap());
        // 0.05 quantile is q[2]
        assert!(!coverage(&q, 1.5, 90).unwrap());
        assert!(coverage(&q, 2.0, 90).unwrap());
        assert!(coverage(&q, 1.0, 95).unwrap());
        assert!(coverage(&q, 1.0, 33).is_err());
    }
}
