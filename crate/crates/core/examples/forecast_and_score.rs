//! Forecast weeks 20-23 of the held-out toy season from the weeks before,
//! write the hub-format file to stdout, and score it against the truth.

use chrono::NaiveDate;
use epidiff::cli::observations_from_season;
use epidiff::encoding::{io, SourceTag};
use epidiff::evaluation::{score_forecast, summarize};
use epidiff::forecast::{ensemble_to_quantiles, export_hub_csv, read_hub_csv, run_forecast, ForecastJob, DEFAULT_TARGET};
use epidiff::inpaint::InpaintConfig;
use epidiff::toy::{load_toy_checkpoint, toy_season_path};

fn main() -> epidiff::Result<()> {
    let n: usize = std::env::args().nth(1).map(|a| a.parse().unwrap()).unwrap_or(64);
    let ckpt = load_toy_checkpoint()?;
    let season = io::load_frames(&toy_season_path(), SourceTag::Modeled)?.remove(0);
    let mut job = ForecastJob::new(20);
    job.n_trajectories = n;
    job.inpaint = InpaintConfig::preset("j5-tt-r5")?;
    job.locations = vec!["CA".into(), "TX".into()];

    let ensemble = run_forecast(&ckpt, &season, &job)?;
    eprintln!(
        "{} trajectories; observed-cell error {:.2e}, boundary score {:?}",
        ensemble.frames.len(),
        ensemble.diagnostics.observed_max_error,
        ensemble.diagnostics.boundary_discontinuity
    );
    let qf = ensemble_to_quantiles(&ensemble.frames, &job)?;
    let reference_date = NaiveDate::from_ymd_opt(2024, 2, 17).unwrap();
    let mut csv = Vec::new();
    export_hub_csv(&mut csv, &qf, reference_date, DEFAULT_TARGET)?;
    print!("{}", String::from_utf8_lossy(&csv));

    let hf = read_hub_csv(csv.as_slice())?;
    let obs = observations_from_season(&season, job.reference_week, reference_date, &job.horizons)?;
    let records = score_forecast(&hf, &obs)?;
    for r in &records {
        eprintln!(
            "{} h{}: observed {:.1}, median {:.1}, WIS {:.2}",
            r.location,
            r.horizon,
            r.observed,
            hf.forecast.get(&r.location, r.horizon).unwrap().median(),
            r.wis
        );
    }
    let s = summarize(&records);
    eprintln!("WIS mean {:.2}; 50% coverage {:.2}, 90% coverage {:.2}", s.wis_mean, s.coverage_50, s.coverage_90);
    Ok(())
}
