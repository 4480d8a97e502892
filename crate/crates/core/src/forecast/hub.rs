//! Hub-style quantile CSV:
//! `reference_date,target,horizon,target_end_date,location,output_type,output_type_id,value`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::quantiles::{QuantileCell, QuantileForecast, QUANTILE_LEVELS};
use crate::error::{Error, Result};

pub const DEFAULT_TARGET: &str = "wk inc flu hosp";

#[derive(Debug, Serialize, Deserialize)]
struct HubRow {
    reference_date: NaiveDate,
    target: String,
    horizon: usize,
    target_end_date: NaiveDate,
    location: String,
    output_type: String,
    output_type_id: String,
    value: String,
}

/// A parsed hub file.
#[derive(Debug, Clone, PartialEq)]
pub struct HubForecast {
    pub reference_date: NaiveDate,
    pub target: String,
    pub forecast: QuantileForecast,
}

/// Week ending date for horizon `h`; horizon 1 ends on the reference date.
pub fn target_end_date(reference_date: NaiveDate, horizon: usize) -> NaiveDate {
    reference_date + Days::new(7 * (horizon as u64 - 1))
}

fn check_location(code: &str) -> Result<()> {
    if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(Error::invalid(format!("invalid location code '{code}'")));
    }
    Ok(())
}

/// Write one row per (location, horizon, level). Numbers use Rust's
/// shortest round-trip formatting, so reading the file back gives the same
/// `f64` values.
pub fn export_hub_csv<W: Write>(
    writer: W,
    qf: &QuantileForecast,
    reference_date: NaiveDate,
    target: &str,
) -> Result<()> {
    qf.validate()?;
    let mut w = csv::Writer::from_writer(writer);
    for cell in &qf.cells {
        check_location(&cell.location)?;
        if cell.horizon == 0 {
            return Err(Error::invalid("horizon 0 is not exported"));
        }
        for (level, value) in QUANTILE_LEVELS.iter().zip(&cell.values) {
            w.serialize(HubRow {
                reference_date,
                target: target.to_string(),
                horizon: cell.horizon,
                target_end_date: target_end_date(reference_date, cell.horizon),
                location: cell.location.clone(),
                output_type: "quantile".into(),
                output_type_id: level.to_string(),
                value: value.to_string(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_hub_csv<R: Read>(reader: R) -> Result<HubForecast> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut header: Option<(NaiveDate, String)> = None;
    let mut cells: BTreeMap<(String, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    let mut order: Vec<(String, usize)> = Vec::new();
    for row in rdr.deserialize::<HubRow>() {
        let row = row?;
        if row.output_type != "quantile" {
            continue;
        }
        match &header {
            None => header = Some((row.reference_date, row.target.clone())),
            Some((d, t)) if *d != row.reference_date || *t != row.target => {
                return Err(Error::data("file mixes reference dates or targets"));
            }
            _ => {}
        }
        check_location(&row.location)?;
        let level: f64 = row
            .output_type_id
            .parse()
            .map_err(|_| Error::data(format!("bad quantile level '{}'", row.output_type_id)))?;
        let k = QUANTILE_LEVELS
            .iter()
            .position(|&q| q == level)
            .ok_or_else(|| Error::data(format!("unsupported quantile level {level}")))?;
        let value: f64 = row
            .value
            .parse()
            .map_err(|_| Error::data(format!("bad value '{}'", row.value)))?;
        let key = (row.location.clone(), row.horizon);
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        if cells.entry(key).or_default().insert(k, value).is_some() {
            return Err(Error::data(format!(
                "{} h{} level {level} appears twice",
                row.location, row.horizon
            )));
        }
    }
    let (reference_date, target) =
        header.ok_or_else(|| Error::data("hub file has no quantile rows"))?;
    let cells = order
        .into_iter()
        .map(|key| {
            let levels = &cells[&key];
            if levels.len() != QUANTILE_LEVELS.len() {
                return Err(Error::data(format!(
                    "{} h{}: {} of {} quantile levels present",
                    key.0,
                    key.1,
                    levels.len(),
                    QUANTILE_LEVELS.len()
                )));
            }
            Ok(QuantileCell {
                location: key.0,
                horizon: key.1,
                values: levels.values().copied().collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let forecast = QuantileForecast { cells };
    forecast.validate()?;
    Ok(HubForecast {
        reference_date,
        target,
        forecast,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qf() -> QuantileForecast {
        QuantileForecast {
            cells: (1..=4)
                .map(|h| QuantileCell {
                    location: "NC".into(),
                    horizon: h,
                    values: (0..23).map(|k| (k as f64 * 1.1 + h as f64) / 3.0).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip() {
        let date = NaiveDate::from_ymd_opt(2024, 1, 6).unwrap();
        let mut buf = Vec::new();
        export_hub_csv(&mut buf, &qf(), date, DEFAULT_TARGET).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + 92);
        assert!(text.lines().nth(1).unwrap().contains(",quantile,0.01,"));
        assert!(text.contains(",2024-01-27,NC,quantile,0.99,"));
        let back = read_hub_csv(buf.as_slice()).unwrap();
        assert_eq!(back.forecast, qf());
        assert_eq!(back.reference_date, date);
    }

    #[test]
    fn rejects_bad_location() {
        let mut f = qf();
        f.cells[0].location = "N C".into();
        let date = NaiveDate::from_ymd_opt(2024, 1, 6).unwrap();
        assert!(export_hub_csv(Vec::new(), &f, date, DEFAULT_TARGET).is_err());
    }
}
