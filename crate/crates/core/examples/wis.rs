//! Weighted interval score of a few hand-made forecasts, with its
//! dispersion / under- / overprediction split and interval coverage.

use epidiff::evaluation::{coverage, wis};
use epidiff::forecast::{sample_quantiles, QUANTILE_LEVELS};

fn main() -> epidiff::Result<()> {
    // quantiles of a uniform sample on [50, 150]
    let sample: Vec<f64> = (0..=1000).map(|i| 50.0 + i as f64 / 10.0).collect();
    let q = sample_quantiles(&sample)?;
    println!("levels {:?}", &QUANTILE_LEVELS[..3]);
    for y in [100.0, 140.0, 160.0, 20.0] {
        let p = wis(&q, y)?;
        println!(
            "y = {y:>5}: WIS {:6.2} = dispersion {:5.2} + under {:5.2} + over {:5.2}; in 50%: {}, in 90%: {}",
            p.wis,
            p.dispersion,
            p.underprediction,
            p.overprediction,
            coverage(&q, y, 50)?,
            coverage(&q, y, 90)?
        );
    }
    println!("point forecast at the truth: WIS {}", wis(&[42.0; 23], 42.0)?.wis);
    Ok(())
}
