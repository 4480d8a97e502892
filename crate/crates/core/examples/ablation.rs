//! One-at-a-time comparison on the bundled worked example: a baseline, an
//! inflated variant and a shifted variant, written as a table and a forest
//! plot.

use std::path::Path;

use epidiff::evaluation::{run_ablation, AblationEntry, ModelSpec, Observations};
use epidiff::forecast::{read_hub_csv, HubForecast};
use epidiff::plot::{forest_plot_svg, write_svg};

fn transformed(hf: &HubForecast, f: impl Fn(f64, f64) -> f64) -> HubForecast {
    let mut out = hf.clone();
    for c in &mut out.forecast.cells {
        let m = c.median();
        c.values.iter_mut().for_each(|v| *v = f(*v, m).max(0.0));
    }
    out
}

fn main() -> epidiff::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/worked");
    let hf = read_hub_csv(std::fs::File::open(dir.join("forecast.csv"))?)?;
    let obs = Observations::read_csv(std::fs::File::open(dir.join("observations.csv"))?)?;
    let spec = ModelSpec {
        schedule: "c500".into(),
        architecture: "U124".into(),
        dataset: "30S70M".into(),
        transform: "Sqrt".into(),
        enrichment: "No".into(),
        inpainting: "j5-tt-r5".into(),
    };
    let baseline = AblationEntry {
        name: "baseline".into(),
        spec: spec.clone(),
        forecasts: vec![hf.clone()],
    };
    let wide = AblationEntry {
        name: "wider intervals".into(),
        spec: ModelSpec { enrichment: "Pois".into(), ..spec.clone() },
        forecasts: vec![transformed(&hf, |v, m| m + 2.0 * (v - m))],
    };
    let shifted = AblationEntry {
        name: "shifted up".into(),
        spec: ModelSpec { schedule: "c200".into(), ..spec },
        forecasts: vec![transformed(&hf, |v, _| v + 20.0)],
    };
    let report = run_ablation(&baseline, &[wide, shifted], &obs)?;
    report.write_csv(std::io::stdout())?;
    let out = std::env::temp_dir().join("epidiff_forest.svg");
    write_svg(&out, &forest_plot_svg("worked example", &report)?)?;
    eprintln!("forest plot written to {}", out.display());
    Ok(())
}
