use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use candle_core::{DType, Device, Tensor};
use epidiff::diffusion::Checkpoint;
use epidiff::encoding::{io, SourceTag};
use epidiff::evaluation::ScoreRecord;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn epidiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epidiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_scores(path: &Path) -> Vec<ScoreRecord> {
    epidiff::cli::load_scores(path).unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&epidiff(&[])), 1);
    assert_eq!(code(&epidiff(&["frobnicate"])), 1);
    assert_eq!(code(&epidiff(&["generate", "--n", "3"])), 1);
    assert_eq!(code(&epidiff(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "preset = \n");
    let out = epidiff(&["build-dataset", "--config", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn missing_trajectory_archive_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "dataset.toml",
        "preset = \"100M\"\n[sources]\ntrajectories = \"nowhere/trajectories.csv\"\n",
    );
    let out = epidiff(&["build-dataset", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("trajectory archive not found"), "{msg}");
    assert!(msg.contains("nowhere/trajectories.csv"), "{msg}");
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = epidiff(&["generate", "--checkpoint", "no/such/model.safetensors", "--n", "2", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checkpoint not found"));
}

#[test]
fn fixture_dataset_counts_and_manifest_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "dataset.toml",
        "preset = \"30S70M\"\nseed = 3\nsummary_only = true\n[sources]\nfixture = true\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = epidiff(&["build-dataset", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["unique_frames"], 1260);
    assert_eq!(summary["total_samples"], 3000);
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
    assert!(a.join("config.resolved.json").exists());

    // outputs are never overwritten without --force
    let again = epidiff(&["build-dataset", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(code(&again), 1);
    assert!(stderr(&again).contains("--force"));
    let forced = epidiff(&["--force", "build-dataset", "--config", s(&cfg), "--out", s(&a)]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn generate_writes_nonnegative_frames() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = assets().join("toy/model.safetensors");
    let out = epidiff(&["generate", "--checkpoint", s(&ckpt), "--n", "8", "--seed", "4", "--plot", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let frames = io::load_frames(&dir.path().join("generated.csv"), SourceTag::Modeled).unwrap();
    assert_eq!(frames.len(), 8);
    assert!(frames.iter().all(|f| f.values().iter().all(|&v| v >= 0.0)));
    assert!(std::fs::read_to_string(dir.path().join("envelope.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn forecast_then_score_on_toy_season() {
    let dir = tempfile::tempdir().unwrap();
    let toy = assets().join("toy");
    let cfg = write(
        dir.path(),
        "forecast.toml",
        &format!(
            "checkpoint = \"{}\"\nseason = \"{}\"\nreference_week = 18\nreference_date = \"2024-01-27\"\n\
             n_trajectories = 16\ninpaint = \"j5-nott-r2\"\nseed = 2\n",
            s(&toy.join("model.safetensors")),
            s(&toy.join("season.csv"))
        ),
    );
    let fc = dir.path().join("fc");
    let out = epidiff(&["forecast", "--config", s(&cfg), "--out", s(&fc), "--plot"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(fc.join("fan_CA.svg").exists());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fc.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["observed_max_error"].as_f64().unwrap() <= 0.02);

    let scores = dir.path().join("scores.csv");
    let out = epidiff(&[
        "score",
        "--forecast",
        s(&fc.join("forecast.csv")),
        "--truth",
        s(&toy.join("season.csv")),
        "--reference-week",
        "18",
        "--out",
        s(&scores),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records = read_scores(&scores);
    assert_eq!(records.len(), 8 * 4);
    assert!(records.iter().all(|r| r.wis >= 0.0 && r.wis.is_finite()));
}

#[test]
fn worked_example_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let worked = assets().join("worked");
    let scores = dir.path().join("scores.csv");
    let out = epidiff(&[
        "score",
        "--forecast",
        s(&worked.join("forecast.csv")),
        "--observations",
        s(&worked.join("observations.csv")),
        "--out",
        s(&scores),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records = read_scores(&scores);
    let mut oracle = csv::Reader::from_path(worked.join("wis_oracle.csv")).unwrap();
    let mut n = 0;
    for row in oracle.records() {
        let row = row.unwrap();
        let (loc, h, expected): (&str, usize, f64) = (&row[0], row[1].parse().unwrap(), row[2].parse().unwrap());
        let got = records
            .iter()
            .find(|r| r.location == loc && r.horizon == h)
            .unwrap_or_else(|| panic!("no score for {loc} h{h}"));
        assert!((got.wis - expected).abs() <= 1e-9, "{loc} h{h}: {} vs {expected}", got.wis);
        n += 1;
    }
    assert_eq!(n, records.len());
}

#[test]
fn ablate_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let worked = assets().join("worked");
    let spec = |inpainting: &str| {
        format!(
            "spec = {{ schedule = \"c500\", architecture = \"U124\", dataset = \"30S70M\", transform = \"Sqrt\", \
             enrichment = \"No\", inpainting = \"{inpainting}\" }}\nforecasts = [\"{}\"]\n",
            s(&worked.join("forecast.csv"))
        )
    };
    let cfg = write(
        dir.path(),
        "ablation.toml",
        &format!(
            "observations = \"{}\"\n[baseline]\nname = \"base\"\n{}\n[[variants]]\nname = \"same\"\n{}",
            s(&worked.join("observations.csv")),
            spec("j5-tt-r5"),
            spec("j10-tt-r2")
        ),
    );
    let out_dir = dir.path().join("ab");
    let out = epidiff(&["ablate", "--config", s(&cfg), "--out", s(&out_dir), "--plot"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("ablation.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["group"], "inpainting");
    assert_eq!(rows[1]["relative_percent"], 0.0);

    let forest = dir.path().join("forest.svg");
    let out = epidiff(&["plot", "forest", "--report", s(&out_dir.join("ablation.json")), "--out", s(&forest)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(std::fs::read_to_string(forest).unwrap().contains("inpainting"));
}

#[test]
fn train_then_generate() {
    let dir = tempfile::tempdir().unwrap();
    let data_cfg = write(
        dir.path(),
        "dataset.toml",
        &format!(
            "surveillance_fraction = 0.0\ntarget_size = 200\n[sources]\nframes = \"{}\"\n",
            s(&assets().join("toy/frames.csv"))
        ),
    );
    let data = dir.path().join("data");
    let out = epidiff(&["build-dataset", "--config", s(&data_cfg), "--out", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model_cfg = write(
        dir.path(),
        "model.toml",
        "base_channels = 8\nsteps = 20\npad_multiple = 4\n[train]\nepochs = 2\n",
    );
    let model = dir.path().join("model");
    let out = epidiff(&["train", "--dataset", s(&data), "--config", s(&model_cfg), "--out", s(&model)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let loss = std::fs::read_to_string(model.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let gen = dir.path().join("gen");
    let ckpt = model.join("model.safetensors");
    let out = epidiff(&["generate", "--checkpoint", s(&ckpt), "--n", "2", "--sampler", "ddim", "--out", s(&gen)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(io::load_frames(&gen.join("generated.csv"), SourceTag::Modeled).unwrap().len(), 2);
}

#[test]
fn corrupted_weights_are_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint::load(&assets().join("toy/model.safetensors"), DType::F32, &Device::Cpu).unwrap();
    let (_, var) = ckpt.model.params().named().find(|(k, _)| k.starts_with("conv_out")).unwrap();
    let shape = var.as_tensor().shape().clone();
    var.set(&Tensor::full(f32::NAN, shape, &Device::Cpu).unwrap()).unwrap();
    let path = dir.path().join("nan.safetensors");
    ckpt.save(&path).unwrap();
    let out = epidiff(&["generate", "--checkpoint", s(&path), "--n", "2", "--out", s(&dir.path().join("g"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
