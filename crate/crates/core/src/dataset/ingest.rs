//! Adapters from upstream-shaped tables to complete season frames.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoding::{io::assemble, SeasonFrame, SourceTag, SEASON_WEEKS};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Trajectories kept per (model, scenario) unless overridden.
pub const DEFAULT_PER_CELL_CAP: usize = 20;

/// Weekly percent influenza-like illness for one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IliRecord {
    pub season: String,
    pub week: usize,
    pub location: String,
    pub percent: f64,
}

/// Weekly hospitalisations reported for one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospRecord {
    pub season: String,
    pub week: usize,
    pub location: String,
    pub value: f64,
}

/// One row of a scenario-model trajectory archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub model: String,
    pub scenario: String,
    pub trajectory_id: String,
    pub week: usize,
    pub location: String,
    pub value: f64,
}

/// Complete trajectories from one (model, scenario) cell.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub model: String,
    pub scenario: String,
    pub locations: Vec<String>,
    /// `(trajectory_id, weeks × locations grid)`.
    pub trajectories: Vec<(String, Array2<f64>)>,
    /// Overrides the per-cell cap for this set.
    pub cap: Option<usize>,
}

pub fn read_csv_records<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Peak cell value of each frame.
pub fn peak_intensities(frames: &[SeasonFrame]) -> Vec<f64> {
    frames.iter().map(SeasonFrame::max_value).collect()
}

fn group_cells<'a, I>(rows: I) -> BTreeMap<String, HashMap<(usize, String), f64>>
where
    I: Iterator<Item = (&'a str, usize, &'a str, f64)>,
{
    let mut seasons: BTreeMap<String, HashMap<(usize, String), f64>> = BTreeMap::new();
    for (season, week, loc, v) in rows {
        seasons
            .entry(season.to_string())
            .or_default()
            .insert((week, loc.to_string()), v);
    }
    seasons
}

/// Turn percent-ILI seasons into incidence-scale frames. Each season is
/// multiplied by one factor so its peak equals the quantile of
/// `peak_reference` at the season's peak rank `(r + ½)/n` among the ILI
/// seasons. All-zero seasons stay zero.
pub fn ingest_ili(records: &[IliRecord], peak_reference: &[f64]) -> Result<Vec<SeasonFrame>> {
    if peak_reference.is_empty() {
        return Err(Error::invalid("ILI rescaling needs a nonempty peak reference"));
    }
    if let Some(r) = records.iter().find(|r| !(0.0..=100.0).contains(&r.percent)) {
        return Err(Error::data(format!(
            "ILI percent {} outside [0, 100] (season {}, week {}, {})",
            r.percent, r.season, r.week, r.location
        )));
    }
    let mut reference = peak_reference.to_vec();
    reference.sort_by(f64::total_cmp);

    let seasons = group_cells(
        records
            .iter()
            .map(|r| (r.season.as_str(), r.week, r.location.as_str(), r.percent)),
    );
    let frames = seasons
        .iter()
        .map(|(season, cells)| {
            assemble(&format!("ili-{season}"), cells, SourceTag::Surveillance)
                .map(|f| f.truncate_weeks(SEASON_WEEKS))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = frames.len();
    let mut by_peak: Vec<usize> = (0..n).collect();
    by_peak.sort_by(|&a, &b| {
        frames[a]
            .max_value()
            .total_cmp(&frames[b].max_value())
            .then_with(|| frames[a].id().cmp(frames[b].id()))
    });
    let mut out = frames.clone();
    for (rank, &i) in by_peak.iter().enumerate() {
        let src = &frames[i];
        let peak = src.max_value();
        let level = (rank as f64 + 0.5) / n as f64;
        let target = quantile_sorted(&reference, level)?;
        let factor = if peak > 0.0 { target / peak } else { 0.0 };
        out[i] = src
            .with_values(src.values().mapv(|v| v * factor))?
            .with_provenance(format!("fluview-ili season {} x{factor:.6}", &src.id()[4..]));
    }
    Ok(out)
}

/// Extend partial-coverage hospitalisation surveillance to every location in
/// `populations`: uncovered locations get the covered network's per-capita
/// weekly rate times their population.
pub fn ingest_hosp_surveillance(
    records: &[HospRecord],
    populations: &BTreeMap<String, f64>,
) -> Result<Vec<SeasonFrame>> {
    if populations.is_empty() {
        return Err(Error::invalid("population table is empty"));
    }
    if let Some((loc, p)) = populations.iter().find(|(_, &p)| !(p > 0.0 && p.is_finite())) {
        return Err(Error::data(format!("population of {loc} must be positive, got {p}")));
    }
    let locations: Vec<String> = populations.keys().cloned().collect();
    let seasons = group_cells(
        records
            .iter()
            .map(|r| (r.season.as_str(), r.week, r.location.as_str(), r.value)),
    );
    let mut out = Vec::with_capacity(seasons.len());
    for (season, cells) in &seasons {
        let covered: BTreeSet<&str> = cells.keys().map(|(_, l)| l.as_str()).collect();
        if covered.is_empty() {
            return Err(Error::data(format!("season {season} has no covered locations")));
        }
        if let Some(unknown) = covered.iter().find(|l| !populations.contains_key(**l)) {
            return Err(Error::data(format!("no population for location '{unknown}'")));
        }
        let weeks = cells.keys().map(|(w, _)| *w).max().unwrap_or(0);
        let covered_pop: f64 = covered.iter().map(|l| populations[*l]).sum();
        let mut values = Array2::zeros((weeks, locations.len()));
        for w in 1..=weeks {
            let mut total = 0.0;
            for l in &covered {
                let v = cells.get(&(w, l.to_string())).ok_or_else(|| {
                    Error::data(format!("season {season}: {l} missing week {w}"))
                })?;
                total += v;
            }
            let rate = total / covered_pop;
            for (j, loc) in locations.iter().enumerate() {
                values[[w - 1, j]] = if covered.contains(loc.as_str()) {
                    cells[&(w, loc.clone())]
                } else {
                    rate * populations[loc]
                };
            }
        }
        let frame = SeasonFrame::new(
            format!("hosp-{season}"),
            values,
            locations.clone(),
            SourceTag::Surveillance,
        )?
        .with_provenance(format!(
            "hospital surveillance season {season}, {} covered locations",
            covered.len()
        ))
        .truncate_weeks(SEASON_WEEKS);
        out.push(frame);
    }
    Ok(out)
}

/// Group archive rows into per-(model, scenario) trajectory sets.
pub fn trajectory_sets(records: &[TrajectoryRecord]) -> Result<Vec<TrajectorySet>> {
    let mut cells: BTreeMap<(String, String), BTreeMap<String, HashMap<(usize, String), f64>>> =
        BTreeMap::new();
    for r in records {
        cells
            .entry((r.model.clone(), r.scenario.clone()))
            .or_default()
            .entry(r.trajectory_id.clone())
            .or_default()
            .insert((r.week, r.location.clone()), r.value);
    }
    let mut sets = Vec::with_capacity(cells.len());
    for ((model, scenario), trajs) in cells {
        let mut locations = None;
        let mut trajectories = Vec::with_capacity(trajs.len());
        for (id, cells) in trajs {
            let frame = assemble(&id, &cells, SourceTag::Modeled)?;
            locations.get_or_insert_with(|| frame.locations().to_vec());
            trajectories.push((id, frame.values().clone()));
        }
        sets.push(TrajectorySet {
            model,
            scenario,
            locations: locations.unwrap_or_default(),
            trajectories,
            cap: None,
        });
    }
    Ok(sets)
}

/// Keep at most `per_cell_cap` trajectories per (model, scenario), choosing
/// the first ids in sorted order so the selection is stable across runs.
pub fn ingest_modeled(sets: &[TrajectorySet], per_cell_cap: usize) -> Result<Vec<SeasonFrame>> {
    let mut out = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for set in sets {
        let cap = set.cap.unwrap_or(per_cell_cap);
        let mut ids: Vec<&(String, Array2<f64>)> = set.trajectories.iter().collect();
        ids.sort_by(|a, b| a.0.cmp(&b.0));
        for (id, grid) in ids.into_iter().take(cap) {
            let dims = (grid.nrows().min(SEASON_WEEKS), grid.ncols());
            if grid.ncols() != set.locations.len() {
                return Err(Error::data(format!(
                    "trajectory {}/{}/{id} has {} columns for {} locations",
                    set.model,
                    set.scenario,
                    grid.ncols(),
                    set.locations.len()
                )));
            }
            match shape {
                None => shape = Some(dims),
                Some(s) if s != dims => {
                    return Err(Error::data(format!(
                        "trajectory {}/{}/{id} has shape {:?}, expected {:?}",
                        set.model, set.scenario, dims, s
                    )))
                }
                _ => {}
            }
            let frame = SeasonFrame::new(
                format!("{}/{}/{id}", set.model, set.scenario),
                grid.clone(),
                set.locations.clone(),
                SourceTag::Modeled,
            )?
            .with_provenance(format!(
                "model={} scenario={} trajectory={id}",
                set.model, set.scenario
            ))
            .truncate_weeks(SEASON_WEEKS)
            .sorted_locations();
            out.push(frame);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ili_season(season: &str, peak: f64) -> Vec<IliRecord> {
        let mut out = Vec::new();
        for w in 1..=52 {
            for loc in ["AA", "BB"] {
                let shape = (-((w as f64 - 20.0) / 5.0).powi(2)).exp();
                out.push(IliRecord {
                    season: season.into(),
                    week: w,
                    location: loc.into(),
                    percent: peak * shape,
                });
            }
        }
        out
    }

    #[test]
    fn ili_factor_matches_reference_peak() {
        let frames = ingest_ili(&ili_season("2015", 5.0), &[2000.0]).unwrap();
        assert_eq!(frames.len(), 1);
        let f = &frames[0];
        assert!((f.max_value() - 2000.0).abs() < 1e-9);
        // every week scaled by 2000 / 5 = 400
        let w10 = 5.0 * (-((10.0f64 - 20.0) / 5.0).powi(2)).exp();
        assert!((f.values()[[9, 0]] - 400.0 * w10).abs() < 1e-9);
        assert_eq!(f.source(), SourceTag::Surveillance);
    }

    #[test]
    fn ili_zero_season_stays_zero() {
        let frames = ingest_ili(&ili_season("2010", 0.0), &[2000.0]).unwrap();
        assert!(frames[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ili_rank_matching_preserves_order() {
        let mut recs = ili_season("a", 2.0);
        recs.extend(ili_season("b", 6.0));
        recs.extend(ili_season("c", 4.0));
        let frames = ingest_ili(&recs, &[100.0, 200.0, 300.0, 400.0, 500.0, 600.0]).unwrap();
        let peaks: Vec<f64> = frames.iter().map(|f| f.max_value()).collect();
        // ranks 0,2,1 -> levels 1/6, 5/6, 1/2; n·p is whole at each level,
        // so the type-2 estimator averages neighbouring order statistics
        assert_eq!(peaks, vec![150.0, 550.0, 350.0]);
    }

    #[test]
    fn ili_errors() {
        assert!(ingest_ili(&ili_season("a", 2.0), &[]).is_err());
        let mut bad = ili_season("a", 2.0);
        bad[3].percent = 120.0;
        assert!(ingest_ili(&bad, &[1.0]).is_err());
        let mut missing = ili_season("a", 2.0);
        missing.remove(10);
        assert!(ingest_ili(&missing, &[1.0]).is_err());
    }

    fn hosp(locs: &[(&str, f64)], weeks: usize) -> Vec<HospRecord> {
        let mut out = Vec::new();
        for w in 1..=weeks {
            for (l, v) in locs {
                out.push(HospRecord {
                    season: "2019".into(),
                    week: w,
                    location: l.to_string(),
                    value: *v,
                });
            }
        }
        out
    }

    #[test]
    fn hosp_population_weighting() {
        // 300 admissions over 3M covered people = 1 per 10,000
        let recs = hosp(&[("AA", 100.0), ("BB", 200.0)], 3);
        let pops = BTreeMap::from([
            ("AA".to_string(), 1_000_000.0),
            ("BB".to_string(), 2_000_000.0),
            ("CC".to_string(), 1_000_000.0),
        ]);
        let frames = ingest_hosp_surveillance(&recs, &pops).unwrap();
        let f = &frames[0];
        assert_eq!(f.locations(), ["AA", "BB", "CC"]);
        for w in 0..3 {
            assert_eq!(f.values()[[w, 0]], 100.0);
            assert!((f.values()[[w, 2]] - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hosp_full_coverage_is_identity() {
        let recs = hosp(&[("AA", 7.0), ("BB", 11.0)], 4);
        let pops = BTreeMap::from([("AA".to_string(), 5.0), ("BB".to_string(), 9.0)]);
        let f = &ingest_hosp_surveillance(&recs, &pops).unwrap()[0];
        assert!(f.values().column(0).iter().all(|&v| v == 7.0));
        assert!(f.values().column(1).iter().all(|&v| v == 11.0));
    }

    #[test]
    fn hosp_errors() {
        let recs = hosp(&[("AA", 1.0)], 2);
        let bad = BTreeMap::from([("AA".to_string(), 0.0)]);
        assert!(ingest_hosp_surveillance(&recs, &bad).is_err());
        let pops = BTreeMap::from([("AA".to_string(), 10.0)]);
        assert!(ingest_hosp_surveillance(&[], &pops).unwrap().is_empty());
    }

    fn set(n: usize, cap: Option<usize>) -> TrajectorySet {
        TrajectorySet {
            model: "m".into(),
            scenario: "A".into(),
            locations: vec!["AA".into(), "BB".into()],
            trajectories: (0..n)
                .rev()
                .map(|i| (format!("{i:04}"), Array2::from_elem((52, 2), i as f64)))
                .collect(),
            cap,
        }
    }

    #[test]
    fn modeled_cap() {
        assert_eq!(ingest_modeled(&[set(5, None)], 20).unwrap().len(), 5);
        let a = ingest_modeled(&[set(100, None)], 20).unwrap();
        let b = ingest_modeled(&[set(100, None)], 20).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, b);
        assert_eq!(a[0].id(), "m/A/0000");
        assert_eq!(a[19].id(), "m/A/0019");
        assert_eq!(ingest_modeled(&[set(100, Some(40))], 20).unwrap().len(), 40);
    }

    #[test]
    fn modeled_shape_errors() {
        let mut s = set(3, None);
        s.trajectories[1].1 = Array2::zeros((52, 3));
        assert!(ingest_modeled(&[s], 20).is_err());
        let mut s = set(3, None);
        s.trajectories[1].1 = Array2::zeros((40, 2));
        assert!(ingest_modeled(&[s], 20).is_err());
    }
}
