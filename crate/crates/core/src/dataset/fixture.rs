//! A synthetic reference library with the same shape and counts as the
//! real one: 13 ILI seasons, 7 hospitalisation seasons and 1,240 scenario
//! trajectories over the 51 U.S. locations.
//!
//! Values are made up. The point is to exercise the ingestion adapters and
//! composition arithmetic at full size without network access.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::compose::FrameLibrary;
use super::ingest::{
    ingest_hosp_surveillance, ingest_ili, ingest_modeled, peak_intensities, HospRecord, IliRecord,
    TrajectorySet, DEFAULT_PER_CELL_CAP,
};
use crate::encoding::{us_locations, SEASON_WEEKS};
use crate::error::Result;

pub const ILI_SEASONS: usize = 13;
pub const HOSP_SEASONS: usize = 7;
/// Locations reporting hospitalisations directly; the rest are filled in by
/// population weighting.
pub const HOSP_COVERED: [&str; 14] = [
    "CA", "CO", "CT", "GA", "MD", "MI", "MN", "NM", "NY", "OH", "OR", "TN", "UT", "IA",
];

/// One smooth epidemic wave per location with jittered timing and size.
fn wave(rng: &mut impl Rng, n_loc: usize, peak_week: f64, height: f64, width: f64) -> Array2<f64> {
    let jitter = Normal::new(0.0, 1.5).expect("valid normal");
    let mut out = Array2::zeros((SEASON_WEEKS, n_loc));
    for l in 0..n_loc {
        let pw = peak_week + jitter.sample(rng);
        let h = height * rng.random_range(0.3..1.7);
        let wd = width * rng.random_range(0.8..1.25);
        for w in 0..SEASON_WEEKS {
            let z = (w as f64 - pw) / wd;
            out[[w, l]] = h * (-0.5 * z * z).exp();
        }
    }
    out
}

/// Trajectory sets shaped like two projection rounds plus one model that
/// contributes a larger share:
/// 4 models × 6 scenarios, 7 models over 30 scenario cells, and 4 scenarios
/// capped at 40. At the default cap this gives 480 + 600 + 160 = 1,240 frames.
pub fn fixture_trajectory_sets(seed: u64) -> Vec<TrajectorySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locations = us_locations();
    let scen = ["A", "B", "C", "D", "E", "F"];
    let mut cells: Vec<(String, &str, usize, Option<usize>)> = Vec::new();
    for m in 0..4 {
        for s in scen {
            cells.push((format!("round4-model{m}"), s, 25, None));
        }
    }
    for (m, n_scen) in [6, 6, 6, 4, 4, 2, 2].into_iter().enumerate() {
        for s in &scen[..n_scen] {
            cells.push((format!("round5-model{m}"), s, 22, None));
        }
    }
    for s in &scen[..4] {
        cells.push(("round5-large".to_string(), s, 50, Some(2 * DEFAULT_PER_CELL_CAP)));
    }
    cells
        .into_iter()
        .map(|(model, scenario, n, cap)| {
            let peak = rng.random_range(12.0..30.0);
            let height = rng.random_range(200.0..3000.0);
            let trajectories = (0..n)
                .map(|i| {
                    let g = wave(&mut rng, locations.len(), peak, height, 4.0);
                    (format!("{i:03}"), g.mapv(|v| (v * 10.0).round() / 10.0))
                })
                .collect();
            TrajectorySet {
                model,
                scenario: scenario.to_string(),
                locations: locations.clone(),
                trajectories,
                cap,
            }
        })
        .collect()
}

pub fn fixture_ili_records(seed: u64) -> Vec<IliRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let locations = us_locations();
    let mut out = Vec::with_capacity(ILI_SEASONS * SEASON_WEEKS * locations.len());
    for s in 0..ILI_SEASONS {
        let season = format!("{}", 2003 + s);
        let (peak, height) = (rng.random_range(15.0..28.0), rng.random_range(2.0..7.0));
        let g = wave(&mut rng, locations.len(), peak, height, 5.0);
        for w in 0..SEASON_WEEKS {
            for (l, loc) in locations.iter().enumerate() {
                out.push(IliRecord {
                    season: season.clone(),
                    week: w + 1,
                    location: loc.clone(),
                    percent: (0.5 + g[[w, l]]).min(100.0),
                });
            }
        }
    }
    out
}

/// Synthetic but fixed population table, 0.5 to 40 million per location.
pub fn fixture_populations() -> BTreeMap<String, f64> {
    us_locations()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, 5e5 + ((i * 37) % 80) as f64 * 5e5))
        .collect()
}

pub fn fixture_hosp_records(seed: u64) -> Vec<HospRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x22);
    let pops = fixture_populations();
    let mut out = Vec::new();
    for s in 0..HOSP_SEASONS {
        let season = format!("{}", 2016 + s);
        let (peak, height) = (rng.random_range(15.0..28.0), rng.random_range(2.0..12.0));
        let g = wave(&mut rng, HOSP_COVERED.len(), peak, height, 4.0);
        for w in 0..SEASON_WEEKS {
            for (l, loc) in HOSP_COVERED.iter().enumerate() {
                // g is a rate per 100k
                out.push(HospRecord {
                    season: season.clone(),
                    week: w + 1,
                    location: loc.to_string(),
                    value: (g[[w, l]] * pops[*loc] / 1e5).round(),
                });
            }
        }
    }
    out
}

/// The full reference library: 20 surveillance and 1,240 modeled frames.
pub fn reference_library(seed: u64) -> Result<FrameLibrary> {
    let modeled = ingest_modeled(&fixture_trajectory_sets(seed), DEFAULT_PER_CELL_CAP)?;
    let peaks = peak_intensities(&modeled);
    let mut frames = ingest_ili(&fixture_ili_records(seed), &peaks)?;
    frames.extend(ingest_hosp_surveillance(&fixture_hosp_records(seed), &fixture_populations())?);
    frames.extend(modeled);
    FrameLibrary::new(frames)
}
