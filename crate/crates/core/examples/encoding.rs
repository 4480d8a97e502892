//! Encode a toy season into model space, show the padding and a few masks,
//! and check that decoding gives the season back.

use epidiff::encoding::{decode_grid, encode_frame, make_mask, MaskSpec, SourceTag};
use epidiff::toy::{load_toy_checkpoint, toy_holdout_season};

fn main() -> epidiff::Result<()> {
    let ckpt = load_toy_checkpoint()?;
    let (t, pad) = (&ckpt.config.transform, &ckpt.config.pad);
    let season = toy_holdout_season(1)?;
    let grid = encode_frame(&season, t, pad)?;
    println!(
        "season {}x{} -> model grid {:?}; model-space range [{:.3}, {:.3}]",
        season.weeks(),
        season.n_locations(),
        grid.shape(),
        grid.values.fold(f64::INFINITY, |a, &b| a.min(b)),
        grid.values.fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
    );
    let back = decode_grid(&grid, t, "roundtrip", season.locations(), SourceTag::Modeled)?;
    let err = (back.values() - season.values())
        .iter()
        .zip(season.values())
        .map(|(d, v)| d.abs() / v.max(1.0))
        .fold(0.0f64, f64::max);
    println!("decode(encode(x)) max relative error {err:.1e}");

    let locs = season.locations().to_vec();
    for spec in [
        MaskSpec::PastOnly { reference_week: 20 },
        MaskSpec::LeaveOneOut { location: locs[0].clone() },
        MaskSpec::Checkerboard { block_weeks: 8, block_locations: 2 },
    ] {
        let mask = make_mask(&spec, season.weeks(), &locs)?;
        println!("{spec:?}: {:.0}% observed", 100.0 * mask.fraction_observed());
    }
    Ok(())
}
