//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines are always printed. Pass criterion numbers to run a
//! subset: `cargo test --test acceptance -- 5 6`.

use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use chrono::NaiveDate;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;

use epidiff::cli::{generate_frames, observations_from_season};
use epidiff::dataset::{compose, fixture, DatasetComposition};
use epidiff::diffusion::{forward_sample, normal_grid, training_loss, NoiseSchedule, ScheduleKind};
use epidiff::encoding::io;
use epidiff::encoding::{
    alternate_locations, encode_frame, make_mask, MaskSpec, ModelGrid, PadSpec, SeasonFrame, SourceTag,
};
use epidiff::evaluation::{
    coverage, cross_state_correlation, run_ablation, wis, AblationEntry, AblationField, ModelSpec,
};
use epidiff::forecast::{
    ensemble_to_quantiles, export_hub_csv, read_hub_csv, run_forecast, sample_quantiles, ForecastJob,
    HubForecast, DEFAULT_TARGET, QUANTILE_LEVELS,
};
use epidiff::inpaint::{boundary_discontinuity, inpaint, observed_max_error, InpaintConfig};
use epidiff::stats::pearson;
use epidiff::toy::{load_toy_checkpoint, load_toy_frames, toy_season_path, train_toy, TOY_SEED};
use epidiff::unet::{UNet, UNetConfig};

type Check = epidiff::Result<(bool, String)>;

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Check); 12] = [
        ("schedule identities", schedules),
        ("forward marginal", forward_marginal),
        ("gradient check", gradient_check),
        ("toy training convergence", toy_training),
        ("unconditional realism", realism),
        ("inpainting fidelity", fidelity),
        ("boundary coherence", boundary),
        ("dataset compositions", compositions),
        ("WIS oracle", wis_oracle),
        ("calibration", calibration),
        ("hub round trip", hub_round_trip),
        ("ablation sanity", ablation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {n:>2} {:<26} {}  {detail}  [{secs:.1}s]",
            name,
            if pass { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn toy_season() -> epidiff::Result<SeasonFrame> {
    Ok(io::load_frames(&toy_season_path(), SourceTag::Modeled)?.remove(0))
}

// 1 ---------------------------------------------------------------------

fn schedules() -> Check {
    let mut worst = 0.0f64;
    for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
        for steps in [50, 200, 500] {
            let s = NoiseSchedule::new(kind, steps)?;
            let beta: Vec<f64> = match kind {
                ScheduleKind::Linear => {
                    let (lo, hi) = (1e-4 * 1000.0 / steps as f64, 0.02 * 1000.0 / steps as f64);
                    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
                }
                ScheduleKind::Cosine => {
                    let f = |t: f64| (((t / steps as f64 + 0.008) / 1.008) * std::f64::consts::PI / 2.0).cos().powi(2);
                    (1..=steps).map(|t| (1.0 - f(t as f64) / f(t as f64 - 1.0)).min(0.999)).collect()
                }
            };
            for t in 1..=steps {
                let ab: f64 = beta[..t].iter().map(|b| 1.0 - b).product();
                let ab_prev: f64 = beta[..t - 1].iter().map(|b| 1.0 - b).product();
                let post = if t == 1 { 0.0 } else { (1.0 - ab_prev) / (1.0 - ab) * beta[t - 1] };
                worst = worst
                    .max((s.betas()[t - 1] - beta[t - 1]).abs())
                    .max((s.alpha_bars()[t - 1] - ab).abs())
                    .max((s.posterior_variances()[t - 1] - post).abs());
            }
        }
    }
    let end = *NoiseSchedule::new(ScheduleKind::Cosine, 500)?.alpha_bars().last().unwrap();
    Ok((
        worst <= 1e-12 && end < 1e-3,
        format!("max deviation {worst:.1e}, cosine T=500 alpha_bar_T {end:.1e}"),
    ))
}

// 2 ---------------------------------------------------------------------

fn forward_marginal() -> Check {
    let steps = 200;
    let s = NoiseSchedule::new(ScheduleKind::Cosine, steps)?;
    let pad = PadSpec::for_shape(8, 4, 4)?;
    let x0 = ModelGrid::new(Array2::from_shape_fn((8, 4), |(w, l)| 0.25 * w as f64 / 7.0 * (l + 1) as f64), pad)?;
    let draws = 10_000;
    let mut worst_z = 0.0f64;
    for t in [1, steps / 2, steps] {
        let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
        let mut sum = Array2::<f64>::zeros((8, 4));
        let mut sum2 = Array2::<f64>::zeros((8, 4));
        for _ in 0..draws {
            let x = forward_sample(&s, &x0, t, &normal_grid(&mut rng, (8, 4)))?;
            sum += &x.values;
            sum2 += &x.values.mapv(|v| v * v);
        }
        let ab = s.alpha_bars()[t - 1];
        let var = 1.0 - ab;
        let n = draws as f64;
        for ((i, &m), &q) in sum.indexed_iter().zip(sum2.iter()) {
            let mean = m / n;
            let sample_var = (q - n * mean * mean) / (n - 1.0);
            let z_mean = (mean - ab.sqrt() * x0.values[i]) / (var / n).sqrt();
            let z_var = (sample_var - var) / (var * (2.0 / (n - 1.0)).sqrt());
            worst_z = worst_z.max(z_mean.abs()).max(z_var.abs());
        }
    }
    Ok((worst_z < 4.0, format!("largest deviation {worst_z:.2} standard errors")))
}

// 3 ---------------------------------------------------------------------

fn replace_entry(var: &Var, idx: usize, value: f64) -> epidiff::Result<()> {
    let t = var.as_tensor();
    let mut v: Vec<f64> = t.flatten_all()?.to_vec1()?;
    v[idx] = value;
    var.set(&Tensor::from_vec(v, t.shape(), t.device())?)?;
    Ok(())
}

fn gradient_check() -> Check {
    let steps = 50;
    let schedule = NoiseSchedule::new(ScheduleKind::Cosine, steps)?;
    let model = UNet::new(UNetConfig::variant("U124", 8)?, steps, 3, DType::F64, &Device::Cpu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x0: Vec<f64> = (0..2 * 16 * 16).map(|_| rng.random_range(0.0..2.0)).collect();
    let x0 = Tensor::from_vec(x0, (2, 1, 16, 16), &Device::Cpu)?;
    let loss = |m: &UNet| -> epidiff::Result<Tensor> {
        training_loss(m, &schedule, &x0, &mut ChaCha8Rng::seed_from_u64(17))
    };
    let grads = loss(&model)?.backward()?;

    let mut named: Vec<_> = model.params().named().map(|(k, v)| (k.clone(), v.clone())).collect();
    named.sort_by(|a, b| a.0.cmp(&b.0));
    let h = 1e-5;
    let (mut diff2, mut norm2, mut worst, mut checked) = (0.0, 0.0, 0.0f64, 0);
    for (k, (_, var)) in named.iter().enumerate().filter(|(k, _)| k % 3 == 0) {
        let analytic: Vec<f64> = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1()?,
            None => continue,
        };
        let base: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        for j in 0..2 {
            let idx = (k * 7919 + j * 104_729) % base.len();
            replace_entry(var, idx, base[idx] + h)?;
            let up = loss(&model)?.to_scalar::<f64>()?;
            replace_entry(var, idx, base[idx] - h)?;
            let down = loss(&model)?.to_scalar::<f64>()?;
            replace_entry(var, idx, base[idx])?;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[idx];
            diff2 += (a - numeric).powi(2);
            norm2 += numeric.powi(2);
            if numeric.abs().max(a.abs()) > 1e-6 {
                worst = worst.max((a - numeric).abs() / numeric.abs().max(a.abs()));
            }
            checked += 1;
        }
    }
    let overall = (diff2 / norm2).sqrt();
    Ok((
        checked > 0 && overall < 1e-3 && worst < 1e-3,
        format!("{checked} entries, relative error overall {overall:.1e}, worst entry {worst:.1e}"),
    ))
}

// 4 ---------------------------------------------------------------------

fn toy_training() -> Check {
    let frames = load_toy_frames()?;
    let (_, a) = train_toy(&frames, 200, TOY_SEED, |_, _| {})?;
    let (_, b) = train_toy(&frames, 200, TOY_SEED, |_, _| {})?;
    let (first, last) = (a.epoch_losses[0], *a.epoch_losses.last().unwrap());
    let spread = a
        .epoch_losses
        .iter()
        .zip(&b.epoch_losses)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    Ok((
        a.epoch_losses.len() == 200 && last < 0.5 * first && spread <= 1e-6,
        format!("epoch 1 loss {first:.4}, epoch 200 loss {last:.4}, rerun max difference {spread:.1e}"),
    ))
}

// 5 ---------------------------------------------------------------------

fn mean_profile(frames: &[SeasonFrame]) -> Vec<f64> {
    (0..frames[0].weeks())
        .map(|w| frames.iter().map(|f| f.values().row(w).sum()).sum::<f64>() / frames.len() as f64)
        .collect()
}

fn realism() -> Check {
    let ckpt = load_toy_checkpoint()?;
    let train = load_toy_frames()?;
    let generated = generate_frames(&ckpt, 256, 7, "ddpm")?;
    let r = pearson(&mean_profile(&generated), &mean_profile(&train)).unwrap_or(f64::NAN);
    let grids: Vec<_> = generated.iter().map(|f| f.values().clone()).collect();
    let c = cross_state_correlation(&grids, 200, 11)?;
    let null = c.null_quantile(0.975)?;
    Ok((
        r > 0.8 && c.mean_r > null,
        format!("profile r {r:.3}; cross-location r {:.3} vs null 97.5% {null:.3}", c.mean_r),
    ))
}

// 6 ---------------------------------------------------------------------

fn fidelity() -> Check {
    let ckpt = load_toy_checkpoint()?;
    let season = toy_season()?;
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
    let (mut copaint_worst, mut repaint_worst) = (0.0f64, 0.0f64);
    for spec in &masks {
        let mask = make_mask(spec, season.weeks(), &locs)?;
        for preset in ["j5-tt-r5", "j5-nott-r2", "j10-tt-r2", "repaint"] {
            let cfg = InpaintConfig::preset(preset)?.with_trajectories(8);
            let res = inpaint(&model, &ckpt.schedule, &observed, &mask, &cfg, 1)?;
            let worst = res
                .grids
                .iter()
                .map(|g| observed_max_error(g, &observed, &mask))
                .fold(0.0f64, f64::max);
            if preset == "repaint" {
                repaint_worst = repaint_worst.max(worst);
            } else {
                copaint_worst = copaint_worst.max(worst);
            }
        }
    }
    Ok((
        repaint_worst == 0.0 && copaint_worst <= 0.02,
        format!("RePaint max error {repaint_worst:.1e}; CoPaint max error {copaint_worst:.2e} over 5 masks x 3 presets"),
    ))
}

// 7 ---------------------------------------------------------------------

fn boundary() -> Check {
    let ckpt = load_toy_checkpoint()?;
    let season = toy_season()?;
    let observed = encode_frame(&season, &ckpt.config.transform, &ckpt.config.pad)?;
    let mask = make_mask(&MaskSpec::PastOnly { reference_week: 20 }, season.weeks(), season.locations())?;
    let mut means = Vec::new();
    for preset in ["j5-tt-r5", "repaint"] {
        let cfg = InpaintConfig::preset(preset)?.with_trajectories(64);
        let res = inpaint(&ckpt.denoiser(), &ckpt.schedule, &observed, &mask, &cfg, 5)?;
        let scores = res
            .grids
            .iter()
            .map(|g| boundary_discontinuity(g, &mask))
            .collect::<epidiff::Result<Vec<f64>>>()?;
        means.push(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    Ok((
        means[0] <= means[1],
        format!("mean boundary score CoPaint {:.4}, RePaint {:.4} (64 runs each)", means[0], means[1]),
    ))
}

// 8 ---------------------------------------------------------------------

fn compositions() -> Check {
    let expected = [("100S", 20, 520), ("100M", 1240, 1240), ("30S70M", 1260, 3000), ("70S30M", 1260, 3000)];
    let mut ok = true;
    let mut seen = Vec::new();
    for seed in [0, 1] {
        let library = fixture::reference_library(seed)?;
        for (name, unique, total) in expected {
            let set = compose(&library, &DatasetComposition::preset(name)?, seed)?;
            ok &= set.n_unique() == unique && set.len() == total;
            if seed == 0 {
                seen.push(format!("{name} {}/{}", set.n_unique(), set.len()));
            }
        }
    }
    Ok((ok, format!("{} (two library seeds)", seen.join(", "))))
}

// 9 ---------------------------------------------------------------------

/// Mean over levels of twice the pinball loss.
fn pinball_wis(q: &[f64], y: f64) -> f64 {
    QUANTILE_LEVELS
        .iter()
        .zip(q)
        .map(|(&tau, &v)| 2.0 * if y >= v { tau * (y - v) } else { (1.0 - tau) * (v - y) })
        .sum::<f64>()
        / QUANTILE_LEVELS.len() as f64
}

fn wis_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut worst, mut worst_parts) = (0.0f64, 0.0f64);
    for case in 0..10_000 {
        let scale = 10f64.powf(rng.random_range(-1.0..4.0));
        let mut q: Vec<f64> = (0..23).map(|_| scale * rng.random::<f64>()).collect();
        if case % 10 == 0 {
            q[5] = q[4];
            q[17] = q[16];
        }
        q.sort_by(f64::total_cmp);
        let y = scale * rng.random_range(-0.2..1.2f64).max(0.0);
        let w = wis(&q, y)?;
        let oracle = pinball_wis(&q, y);
        worst = worst.max((w.wis - oracle).abs() / oracle.abs().max(1.0));
        worst_parts = worst_parts.max((w.dispersion + w.underprediction + w.overprediction - w.wis).abs());
    }
    let perfect = wis(&[7.5; 23], 7.5)?.wis;
    Ok((
        worst <= 1e-12 && worst_parts <= 1e-9 && perfect == 0.0,
        format!("max deviation from pinball oracle {worst:.1e}, decomposition {worst_parts:.1e}, perfect forecast {perfect}"),
    ))
}

// 10 --------------------------------------------------------------------

fn calibration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let cells = 2000;
    let (mut in50, mut in90) = (0, 0);
    for _ in 0..cells {
        let mu: f64 = rng.random_range(1.0..6.0);
        let sigma: f64 = rng.random_range(0.1..1.0);
        let dist = LogNormal::new(mu, sigma).expect("valid parameters");
        let ensemble: Vec<f64> = (0..512).map(|_| rng.sample(dist)).collect();
        let q = sample_quantiles(&ensemble)?;
        let y = rng.sample(dist);
        in50 += usize::from(coverage(&q, y, 50)?);
        in90 += usize::from(coverage(&q, y, 90)?);
    }
    let (c50, c90) = (100.0 * in50 as f64 / cells as f64, 100.0 * in90 as f64 / cells as f64);
    Ok((
        (c50 - 50.0).abs() <= 5.0 && (c90 - 90.0).abs() <= 5.0,
        format!("coverage 50% interval {c50:.1}%, 90% interval {c90:.1}% over {cells} cells"),
    ))
}

// 11 --------------------------------------------------------------------

fn hub_round_trip() -> Check {
    let ckpt = load_toy_checkpoint()?;
    let season = toy_season()?;
    let mut job = ForecastJob::new(20);
    job.n_trajectories = 32;
    job.inpaint = InpaintConfig::preset("j5-nott-r2")?;
    let ensemble = run_forecast(&ckpt, &season, &job)?;
    let qf = ensemble_to_quantiles(&ensemble.frames, &job)?;
    let reference_date = NaiveDate::from_ymd_opt(2024, 2, 17).unwrap();
    let mut buf = Vec::new();
    export_hub_csv(&mut buf, &qf, reference_date, DEFAULT_TARGET)?;
    let rows = String::from_utf8_lossy(&buf).lines().count() - 1;
    let back = read_hub_csv(buf.as_slice())?;
    let expected_rows = season.n_locations() * job.horizons.len() * 23;
    let identical = back
        == HubForecast {
            reference_date,
            target: DEFAULT_TARGET.to_string(),
            forecast: qf.clone(),
        };
    let shaped = back.forecast.cells.iter().all(|c| {
        c.values.len() == 23 && c.values.iter().all(|&v| v >= 0.0) && c.values.windows(2).all(|w| w[0] <= w[1])
    });
    Ok((
        identical && shaped && rows == expected_rows,
        format!("{rows} rows (expected {expected_rows}), identical after re-import: {identical}, monotone and nonnegative: {shaped}"),
    ))
}

// 12 --------------------------------------------------------------------

fn spec() -> ModelSpec {
    ModelSpec {
        schedule: "c50".into(),
        architecture: "U124".into(),
        dataset: "toy".into(),
        transform: "Sqrt".into(),
        enrichment: "No".into(),
        inpainting: "repaint".into(),
    }
}

fn ablation() -> Check {
    let ckpt = load_toy_checkpoint()?;
    let season = toy_season()?;
    let start = NaiveDate::from_ymd_opt(2023, 10, 7).unwrap();
    let mut forecasts = Vec::new();
    let mut obs = epidiff::evaluation::Observations::default();
    for reference_week in [12, 20, 28] {
        let mut job = ForecastJob::new(reference_week);
        job.n_trajectories = 64;
        job.inpaint = InpaintConfig::preset("repaint")?;
        job.seed = reference_week as u64;
        let ensemble = run_forecast(&ckpt, &season, &job)?;
        let reference_date = start + chrono::Days::new(7 * (reference_week as u64 - 1));
        forecasts.push(HubForecast {
            reference_date,
            target: DEFAULT_TARGET.to_string(),
            forecast: ensemble_to_quantiles(&ensemble.frames, &job)?,
        });
        obs.0.extend(observations_from_season(&season, reference_week, reference_date, &job.horizons)?.0);
    }
    let corrupted: Vec<HubForecast> = forecasts
        .iter()
        .map(|hf| {
            let mut hf = hf.clone();
            for c in &mut hf.forecast.cells {
                c.values.iter_mut().for_each(|v| *v = 3.0 * *v + 50.0);
            }
            hf
        })
        .collect();
    let baseline = AblationEntry {
        name: "baseline".into(),
        spec: spec(),
        forecasts: forecasts.clone(),
    };
    let mut variants = Vec::new();
    for field in AblationField::ALL {
        let mut s = spec();
        let label = format!("{field}-variant");
        match field {
            AblationField::Schedule => s.schedule = label.clone(),
            AblationField::Architecture => s.architecture = label.clone(),
            AblationField::Dataset => s.dataset = label.clone(),
            AblationField::Transform => s.transform = label.clone(),
            AblationField::Enrichment => s.enrichment = label.clone(),
            AblationField::Inpainting => s.inpainting = label.clone(),
        }
        let corrupt = field == AblationField::Inpainting;
        variants.push(AblationEntry {
            name: label,
            spec: s,
            forecasts: if corrupt { corrupted.clone() } else { forecasts.clone() },
        });
    }
    let report = run_ablation(&baseline, &variants, &obs)?;
    let base = &report.rows[0];
    let bad = report.rows.iter().find(|r| r.group == Some(AblationField::Inpainting)).unwrap();
    let copies_zero = report
        .rows
        .iter()
        .filter(|r| r.group.is_some() && r.group != Some(AblationField::Inpainting))
        .all(|r| r.relative_percent == 0.0 && r.mean_paired_difference == 0.0 && r.n_better + r.n_worse == 0);
    let groups: Vec<AblationField> = report.rows.iter().filter_map(|r| r.group).collect();
    let pass = base.relative_percent == 0.0
        && base.mean_paired_difference == 0.0
        && copies_zero
        && bad.total_wis > base.total_wis
        && bad.p_value < 0.05
        && groups == AblationField::ALL;
    Ok((
        pass,
        format!(
            "corrupted variant WIS {:.1} vs baseline {:.1}, worse on {}/{} cells, sign test p {:.1e}; baseline and copies delta 0: {}; {} families",
            bad.total_wis,
            base.total_wis,
            bad.n_worse,
            bad.n_cells,
            bad.p_value,
            copies_zero,
            groups.len()
        ),
    ))
}
