//! Condition the toy model on each mask family and report how closely the
//! samples reproduce the observed cells (model-space max error) and the
//! jump at the observed/forecast boundary.

use std::time::Instant;

use epidiff::encoding::{alternate_locations, encode_frame, make_mask, MaskSpec, SourceTag};
use epidiff::encoding::io;
use epidiff::inpaint::{inpaint, InpaintConfig};
use epidiff::toy::{load_toy_checkpoint, toy_season_path};

fn main() -> epidiff::Result<()> {
    let n: usize = std::env::args().nth(1).map(|a| a.parse().unwrap()).unwrap_or(8);
    let ckpt = load_toy_checkpoint()?;
    let season = io::load_frames(&toy_season_path(), SourceTag::Modeled)?.remove(0);
    let observed = encode_frame(&season, &ckpt.config.transform, &ckpt.config.pad)?;
    let locs = season.locations().to_vec();
    let masks = [
        MaskSpec::PastOnly { reference_week: 20 },
        MaskSpec::HalfMap { hidden: alternate_locations(&locs) },
        MaskSpec::LeaveOneOut { location: locs[2].clone() },
        MaskSpec::MidseasonGap { week_a: 18, week_b: 30 },
        MaskSpec::Checkerboard { block_weeks: 8, block_locations: 2 },
    ];
    let model = ckpt.denoiser();
    for spec in &masks {
        let mask = make_mask(spec, season.weeks(), &locs)?;
        for preset in ["j5-tt-r5", "j5-nott-r2", "j10-tt-r2", "repaint"] {
            let cfg = InpaintConfig::preset(preset)?.with_trajectories(n);
            let start = Instant::now();
            let res = inpaint(&model, &ckpt.schedule, &observed, &mask, &cfg, 1)?;
            let d = &res.diagnostics;
            println!(
                "{:<14} {:<11} max err {:.2e}  boundary {:>8}  evals {:>4}  {:.1}s",
                format!("{spec:?}").split([' ', '{']).next().unwrap(),
                preset,
                d.observed_max_error,
                d.boundary_discontinuity.map(|b| format!("{b:.3}")).unwrap_or("-".into()),
                d.network_evaluations,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
