//! The `epidiff` command line: build datasets, train, generate, forecast,
//! score, run ablations and draw figures.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    compose, fixture, ingest_hosp_surveillance, ingest_ili, ingest_modeled, peak_intensities,
    read_csv_records, trajectory_sets, AugmentationConfig, DatasetComposition, DatasetManifest,
    FrameLibrary, HospRecord, IliRecord, TrajectoryRecord, DEFAULT_PER_CELL_CAP,
};
use crate::diffusion::{
    ddim_sample, sample_unconditional, Checkpoint, DiffusionConfig, ScheduleKind, TrainConfig,
    DEFAULT_SAMPLE_BATCH,
};
use crate::encoding::{
    decode_grid, io, IntensityTransform, PadSpec, SeasonFrame, SourceTag, TransformKind,
    DEFAULT_PAD_MULTIPLE,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    read_scores, run_ablation, score_forecast, summarize, write_scores, AblationEntry,
    AblationReport, ModelSpec, Observations,
};
use crate::forecast::{
    ensemble_to_quantiles, export_hub_csv, read_hub_csv, run_forecast, target_end_date,
    ForecastJob, DEFAULT_TARGET,
};
use crate::inpaint::InpaintConfig;
use crate::plot::{fan_chart_svg, forest_plot_svg, write_svg, Bands, Line};
use crate::unet::UNetConfig;

#[derive(Debug, Parser)]
#[command(name = "epidiff", version, about = "Diffusion models for epidemic season grids")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest sources, compose a training set and write its manifest.
    BuildDataset(BuildDatasetArgs),
    /// Train a denoiser on a built dataset.
    Train(TrainArgs),
    /// Sample unconditional seasons from a checkpoint.
    Generate(GenerateArgs),
    /// Produce a quantile forecast for a partly observed season.
    Forecast(ForecastArgs),
    /// Score a hub forecast against observations.
    Score(ScoreArgs),
    /// Compare forecast files from one-at-a-time configuration changes.
    Ablate(AblateArgs),
    /// Draw figures from existing outputs.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Dataset configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory of `build-dataset`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Model and training configuration (TOML); defaults apply if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `ddpm` (ancestral) or `ddim`.
    #[arg(long, default_value = "ddpm")]
    pub sampler: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a quantile-envelope figure.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Forecast job (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one fan chart per location.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Hub-format forecast CSV.
    #[arg(long)]
    pub forecast: PathBuf,
    /// Observations CSV (`location,target_end_date,value`).
    #[arg(long, conflicts_with = "truth")]
    pub observations: Option<PathBuf>,
    /// A complete season (frame CSV) to score against instead.
    #[arg(long, requires = "reference_week")]
    pub truth: Option<PathBuf>,
    /// First forecast week of the season, with `--truth`.
    #[arg(long)]
    pub reference_week: Option<usize>,
    /// Output score table (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Ablation configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the forest plot.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(subcommand)]
    pub kind: PlotKind,
}

#[derive(Debug, Subcommand)]
pub enum PlotKind {
    /// Fan chart of a forecast ensemble for one location.
    Fan {
        #[arg(long)]
        ensemble: PathBuf,
        /// Observed season drawn on top.
        #[arg(long)]
        season: Option<PathBuf>,
        #[arg(long)]
        location: String,
        #[arg(long)]
        reference_week: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantile envelope of generated seasons, summed over locations.
    Envelope {
        #[arg(long)]
        frames: PathBuf,
        /// Training frames whose mean profile is drawn on top.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forest plot of an ablation report (`ablation.json`).
    Forest {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => 1,
        Error::Numeric(_) | Error::Candle(_) => 3,
        Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Checkpoint(_) => 2,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("epidiff: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::invalid("--workers must be at least 1"));
        }
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
        // a global pool may already exist when called as a library
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let force = cli.force;
    match &cli.command {
        Command::BuildDataset(a) => cmd_build_dataset(a, force),
        Command::Train(a) => cmd_train(a, force),
        Command::Generate(a) => cmd_generate(a, force),
        Command::Forecast(a) => cmd_forecast(a, force),
        Command::Score(a) => cmd_score(a, force),
        Command::Ablate(a) => cmd_ablate(a, force),
        Command::Plot(a) => cmd_plot(a, force),
    }
}

// ---------------------------------------------------------------- helpers

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Resolve `p` against the directory of the config file that named it.
fn relative_to(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn require_input(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::data(format!("{what} not found: {}", path.display())))
    }
}

/// Check that none of `files` exist in `dir` unless `force`, then create `dir`.
fn prepare_out(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    if !force {
        if let Some(f) = files.iter().find(|f| dir.join(f).exists()) {
            return Err(Error::invalid(format!(
                "{} exists; pass --force to overwrite",
                dir.join(f).display()
            )));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn prepare_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::invalid(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

const SNAPSHOT: &str = "config.resolved.json";

fn write_snapshot<T: Serialize>(dir: &Path, value: &T) -> Result<()> {
    std::fs::write(dir.join(SNAPSHOT), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require_input(path, "checkpoint")?;
    Checkpoint::load(path, DType::F32, &Device::Cpu)
}

// ---------------------------------------------------------- build-dataset

/// Where frames come from. Any combination may be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesConfig {
    /// Ready-made frames in the frame CSV format.
    pub frames: Option<PathBuf>,
    /// Percent-ILI table: `season,week,location,percent`.
    pub ili: Option<PathBuf>,
    /// Hospitalisation table: `season,week,location,value`.
    pub hosp: Option<PathBuf>,
    /// Populations: `location,population`.
    pub populations: Option<PathBuf>,
    /// Trajectory archive: `model,scenario,trajectory_id,week,location,value`.
    pub trajectories: Option<PathBuf>,
    /// Use the built-in synthetic reference library.
    #[serde(default)]
    pub fixture: bool,
    pub per_cell_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub sources: SourcesConfig,
    /// Composition preset (`100S`, `100M`, `30S70M`, `70S30M`).
    pub preset: Option<String>,
    pub surveillance_fraction: Option<f64>,
    pub target_size: Option<usize>,
    /// Enrichment preset: `No`, `Pois`, `PoisPadScaleSmall`, `PoisPadScale`.
    #[serde(default = "default_enrichment")]
    pub enrichment: String,
    #[serde(default)]
    pub seed: u64,
    /// Skip writing `library.csv` (the manifest and summary are still written).
    #[serde(default)]
    pub summary_only: bool,
}

fn default_enrichment() -> String {
    "No".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct PopulationRow {
    location: String,
    population: f64,
}

/// Counts written by `build-dataset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub library_frames: usize,
    pub library_counts: BTreeMap<SourceTag, usize>,
    pub unique_frames: usize,
    pub total_samples: usize,
    pub manifest_sha256: String,
}

fn open(path: &Path, what: &str) -> Result<BufReader<File>> {
    require_input(path, what)?;
    Ok(BufReader::new(File::open(path)?))
}

pub fn build_library(sources: &SourcesConfig, config_path: &Path) -> Result<FrameLibrary> {
    let path = |p: &PathBuf| relative_to(config_path, p);
    let cap = sources.per_cell_cap.unwrap_or(DEFAULT_PER_CELL_CAP);
    let mut frames: Vec<SeasonFrame> = Vec::new();
    if sources.fixture {
        frames.extend(fixture::reference_library(0)?.frames().iter().cloned());
    }
    if let Some(p) = &sources.frames {
        frames.extend(io::read_frames(open(&path(p), "frame file")?, SourceTag::Modeled)?);
    }
    let mut modeled = Vec::new();
    if let Some(p) = &sources.trajectories {
        let records: Vec<TrajectoryRecord> = read_csv_records(open(&path(p), "trajectory archive")?)?;
        modeled = ingest_modeled(&trajectory_sets(&records)?, cap)?;
    }
    if let Some(p) = &sources.ili {
        let records: Vec<IliRecord> = read_csv_records(open(&path(p), "ILI table")?)?;
        let reference: Vec<f64> = if modeled.is_empty() {
            peak_intensities(
                &frames
                    .iter()
                    .filter(|f| f.source() == SourceTag::Modeled)
                    .cloned()
                    .collect::<Vec<_>>(),
            )
        } else {
            peak_intensities(&modeled)
        };
        frames.extend(ingest_ili(&records, &reference)?);
    }
    if let Some(p) = &sources.hosp {
        let pops_path = sources
            .populations
            .as_ref()
            .ok_or_else(|| Error::invalid("hospitalisation source needs a population table"))?;
        let records: Vec<HospRecord> = read_csv_records(open(&path(p), "hospitalisation table")?)?;
        let pops: Vec<PopulationRow> = read_csv_records(open(&path(pops_path), "population table")?)?;
        let pops = pops.into_iter().map(|r| (r.location, r.population)).collect();
        frames.extend(ingest_hosp_surveillance(&records, &pops)?);
    }
    frames.extend(modeled);
    if frames.is_empty() {
        return Err(Error::invalid("no sources configured"));
    }
    FrameLibrary::new(frames)
}

pub fn resolve_composition(cfg: &DatasetConfig) -> Result<DatasetComposition> {
    match (&cfg.preset, cfg.surveillance_fraction, cfg.target_size) {
        (Some(p), None, None) => DatasetComposition::preset(p),
        (None, Some(f), Some(n)) => Ok(DatasetComposition::new(f, n)),
        _ => Err(Error::invalid(
            "give either `preset` or both `surveillance_fraction` and `target_size`",
        )),
    }
}

fn cmd_build_dataset(a: &BuildDatasetArgs, force: bool) -> Result<()> {
    let cfg: DatasetConfig = read_toml(&a.config)?;
    let comp = resolve_composition(&cfg)?;
    let augmentation = AugmentationConfig::preset(&cfg.enrichment)?;
    prepare_out(&a.out, &["library.csv", "manifest.json", "summary.json", SNAPSHOT], force)?;
    let library = build_library(&cfg.sources, &a.config)?;
    let set = compose(&library, &comp, cfg.seed)?;
    let manifest = DatasetManifest::new(&library, &set, &augmentation);
    manifest.save(&a.out.join("manifest.json"))?;
    if !cfg.summary_only {
        io::save_frames(&a.out.join("library.csv"), library.frames(), true)?;
    }
    let summary = DatasetSummary {
        library_frames: library.len(),
        library_counts: library.counts(),
        unique_frames: set.n_unique(),
        total_samples: set.len(),
        manifest_sha256: manifest.hash()?,
    };
    std::fs::write(
        a.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    write_snapshot(&a.out, &cfg)?;
    println!(
        "library {} frames; training set {} unique / {} total",
        summary.library_frames, summary.unique_frames, summary.total_samples
    );
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: String,
    pub base_channels: usize,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub transform: TransformKind,
    pub pad_multiple: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: "U124".into(),
            base_channels: 16,
            schedule: ScheduleKind::Cosine,
            steps: 200,
            transform: TransformKind::Sqrt,
            pad_multiple: DEFAULT_PAD_MULTIPLE,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

/// Rebuild the training frames described by a dataset directory.
pub fn load_training_set(dir: &Path) -> Result<(Vec<SeasonFrame>, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    require_input(&manifest_path, "dataset manifest")?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let lib_path = dir.join("library.csv");
    require_input(&lib_path, "frame library")?;
    let library = FrameLibrary::new(io::load_frames(&lib_path, SourceTag::Modeled)?)?;
    let set = compose(&library, &manifest.composition, manifest.seed)?;
    if set.multiplicities() != manifest.multiplicities {
        return Err(Error::data(
            "library does not reproduce the manifest's training set",
        ));
    }
    let frames = (0..set.len()).map(|k| set.sample(k).clone()).collect();
    Ok((frames, manifest))
}

fn cmd_train(a: &TrainArgs, force: bool) -> Result<()> {
    let mc: ModelConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => ModelConfig::default(),
    };
    prepare_out(&a.out, &["model.safetensors", "loss.csv", SNAPSHOT], force)?;
    let (frames, manifest) = load_training_set(&a.dataset)?;
    let first = &frames[0];
    let config = DiffusionConfig {
        unet: UNetConfig::variant(&mc.variant, mc.base_channels)?,
        schedule: mc.schedule,
        steps: mc.steps,
        transform: IntensityTransform::fit(&frames, mc.transform)?,
        pad: PadSpec::for_shape(first.weeks(), first.n_locations(), mc.pad_multiple)?,
        locations: first.locations().to_vec(),
        manifest_hash: manifest.hash()?,
        train: mc.train.clone(),
        init_seed: mc.init_seed,
    };
    let epochs = config.train.epochs;
    let (ckpt, report) = Checkpoint::fit(
        config,
        &frames,
        &manifest.augmentation,
        DType::F32,
        &Device::Cpu,
        |e, l| info!("epoch {e}/{epochs} loss {l:.5}"),
    )?;
    ckpt.save(&a.out.join("model.safetensors"))?;
    report.write_csv(&a.out.join("loss.csv"))?;
    write_snapshot(&a.out, &mc)?;
    println!(
        "trained {} epochs; final loss {:.5}",
        report.epoch_losses.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

// --------------------------------------------------------------- generate

#[derive(Debug, Serialize)]
struct GenerateSnapshot<'a> {
    checkpoint: &'a Path,
    n: usize,
    seed: u64,
    sampler: &'a str,
}

/// Sample `n` seasons and decode them to incidence.
pub fn generate_frames(ckpt: &Checkpoint, n: usize, seed: u64, sampler: &str) -> Result<Vec<SeasonFrame>> {
    let pad = ckpt.config.pad;
    let grids = match sampler {
        "ddpm" => sample_unconditional(&ckpt.denoiser(), &ckpt.schedule, n, pad, seed, DEFAULT_SAMPLE_BATCH)?,
        "ddim" => ddim_sample(&ckpt.denoiser(), &ckpt.schedule, n, pad, seed, 0.0, DEFAULT_SAMPLE_BATCH)?,
        other => return Err(Error::invalid(format!("unknown sampler '{other}'"))),
    };
    grids
        .iter()
        .enumerate()
        .map(|(i, g)| {
            decode_grid(
                g,
                &ckpt.config.transform,
                format!("generated-{i:04}"),
                &ckpt.config.locations,
                SourceTag::Modeled,
            )
        })
        .collect()
}

/// Per-week totals over locations, one series per frame.
fn weekly_totals(frames: &[SeasonFrame]) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|f| f.values().rows().into_iter().map(|r| r.sum()).collect())
        .collect()
}

fn envelope_svg(frames: &[SeasonFrame], reference: Option<&[SeasonFrame]>) -> Result<String> {
    let weeks = frames
        .first()
        .ok_or_else(|| Error::invalid("no frames to plot"))?
        .weeks();
    let x: Vec<f64> = (1..=weeks).map(|w| w as f64).collect();
    let bands = Bands::from_samples(x.clone(), &weekly_totals(frames))?;
    let mut lines = Vec::new();
    if let Some(r) = reference.filter(|r| !r.is_empty()) {
        let totals = weekly_totals(r);
        let mean: Vec<(f64, f64)> = (0..weeks)
            .map(|w| (x[w], totals.iter().map(|s| s[w]).sum::<f64>() / totals.len() as f64))
            .collect();
        lines.push(Line {
            label: "training mean".into(),
            points: mean,
            color: "darkorange".into(),
        });
    }
    fan_chart_svg(
        &format!("{} generated seasons (all locations)", frames.len()),
        &bands,
        &lines,
        "week",
        "incidence",
    )
}

fn cmd_generate(a: &GenerateArgs, force: bool) -> Result<()> {
    prepare_out(&a.out, &["generated.csv", "envelope.svg", SNAPSHOT], force)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let frames = generate_frames(&ckpt, a.n, a.seed, &a.sampler)?;
    io::save_frames(&a.out.join("generated.csv"), &frames, false)?;
    if a.plot && !frames.is_empty() {
        write_svg(&a.out.join("envelope.svg"), &envelope_svg(&frames, None)?)?;
    }
    write_snapshot(
        &a.out,
        &GenerateSnapshot {
            checkpoint: &a.checkpoint,
            n: a.n,
            seed: a.seed,
            sampler: &a.sampler,
        },
    )?;
    println!("wrote {} generated seasons", frames.len());
    Ok(())
}

// --------------------------------------------------------------- forecast

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub checkpoint: PathBuf,
    /// Frame CSV holding the season to condition on.
    pub season: PathBuf,
    /// Which season in the file; defaults to the first.
    pub season_id: Option<String>,
    pub reference_week: usize,
    pub reference_date: NaiveDate,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub locations: Vec<String>,
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
    /// Inpainting preset name.
    #[serde(default = "default_inpaint")]
    pub inpaint: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target: String,
}

fn default_horizons() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_trajectories() -> usize {
    512
}
fn default_inpaint() -> String {
    "j5-tt-r5".into()
}
fn default_target() -> String {
    DEFAULT_TARGET.into()
}

fn select_season(path: &Path, id: Option<&str>) -> Result<SeasonFrame> {
    let frames = io::read_frames(open(path, "season file")?, SourceTag::Surveillance)?;
    match id {
        Some(id) => frames
            .into_iter()
            .find(|f| f.id() == id)
            .ok_or_else(|| Error::data(format!("season '{id}' not in {}", path.display()))),
        None => frames
            .into_iter()
            .next()
            .ok_or_else(|| Error::data(format!("{} holds no seasons", path.display()))),
    }
}

fn cmd_forecast(a: &ForecastArgs, force: bool) -> Result<()> {
    let cfg: ForecastConfig = read_toml(&a.config)?;
    let inpaint = InpaintConfig::preset(&cfg.inpaint)?;
    prepare_out(
        &a.out,
        &["forecast.csv", "ensemble.csv", "diagnostics.json", SNAPSHOT],
        force,
    )?;
    let ckpt = load_checkpoint(&relative_to(&a.config, &cfg.checkpoint))?;
    let season = select_season(&relative_to(&a.config, &cfg.season), cfg.season_id.as_deref())?;
    let job = ForecastJob {
        reference_week: cfg.reference_week,
        horizons: cfg.horizons.clone(),
        locations: cfg.locations.clone(),
        n_trajectories: cfg.n_trajectories,
        inpaint,
        seed: cfg.seed,
    };
    let ens = run_forecast(&ckpt, &season, &job)?;
    let qf = ensemble_to_quantiles(&ens.frames, &job)?;
    export_hub_csv(
        File::create(a.out.join("forecast.csv"))?,
        &qf,
        cfg.reference_date,
        &cfg.target,
    )?;
    io::save_frames(&a.out.join("ensemble.csv"), &ens.frames, false)?;
    std::fs::write(
        a.out.join("diagnostics.json"),
        serde_json::to_string_pretty(&ens.diagnostics)? + "\n",
    )?;
    if a.plot {
        let locations = if job.locations.is_empty() {
            season.locations().to_vec()
        } else {
            job.locations.clone()
        };
        for loc in &locations {
            let svg = fan_svg(&ens.frames, Some(&season), loc, Some(job.reference_week))?;
            write_svg(&a.out.join(format!("fan_{loc}.svg")), &svg)?;
        }
    }
    write_snapshot(&a.out, &cfg)?;
    println!("wrote {} quantile cells from {} trajectories", qf.len(), ens.frames.len());
    Ok(())
}

fn fan_svg(
    ensemble: &[SeasonFrame],
    season: Option<&SeasonFrame>,
    location: &str,
    reference_week: Option<usize>,
) -> Result<String> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::invalid("empty ensemble"))?;
    let j = first
        .location_index(location)
        .ok_or_else(|| Error::invalid(format!("unknown location '{location}'")))?;
    let start = reference_week.unwrap_or(1);
    let weeks: Vec<usize> = (start..=first.weeks()).collect();
    let samples: Vec<Vec<f64>> = ensemble
        .iter()
        .map(|f| weeks.iter().map(|&w| f.values()[[w - 1, j]]).collect())
        .collect();
    let bands = Bands::from_samples(weeks.iter().map(|&w| w as f64).collect(), &samples)?;
    let mut lines = Vec::new();
    if let Some(s) = season {
        let k = s
            .location_index(location)
            .ok_or_else(|| Error::invalid(format!("season lacks location '{location}'")))?;
        let end = reference_week.map(|r| r - 1).unwrap_or(s.weeks());
        lines.push(Line {
            label: "observed".into(),
            points: (1..=end).map(|w| (w as f64, s.values()[[w - 1, k]])).collect(),
            color: "black".into(),
        });
    }
    fan_chart_svg(&format!("forecast, {location}"), &bands, &lines, "week", "incidence")
}

// ------------------------------------------------------------------ score

/// Observations for the hub forecast's cells, read from a full season.
pub fn observations_from_season(
    season: &SeasonFrame,
    reference_week: usize,
    reference_date: NaiveDate,
    horizons: &[usize],
) -> Result<Observations> {
    let mut obs = Observations::default();
    for &h in horizons {
        let w = reference_week + h - 1;
        if w == 0 || w > season.weeks() {
            return Err(Error::invalid(format!("horizon {h} falls outside the season")));
        }
        for (j, loc) in season.locations().iter().enumerate() {
            obs.insert(loc.clone(), target_end_date(reference_date, h), season.values()[[w - 1, j]]);
        }
    }
    Ok(obs)
}

fn cmd_score(a: &ScoreArgs, force: bool) -> Result<()> {
    prepare_file(&a.out, force)?;
    let hf = read_hub_csv(open(&a.forecast, "forecast file")?)?;
    let obs = match (&a.observations, &a.truth, a.reference_week) {
        (Some(p), None, _) => Observations::read_csv(open(p, "observations file")?)?,
        (None, Some(p), Some(r)) => {
            let season = select_season(p, None)?;
            let mut horizons: Vec<usize> = hf.forecast.cells.iter().map(|c| c.horizon).collect();
            horizons.sort_unstable();
            horizons.dedup();
            observations_from_season(&season, r, hf.reference_date, &horizons)?
        }
        _ => {
            return Err(Error::invalid(
                "give --observations, or --truth with --reference-week",
            ))
        }
    };
    let records = score_forecast(&hf, &obs)?;
    write_scores(File::create(&a.out)?, &records)?;
    let s = summarize(&records);
    println!(
        "{} cells: WIS sum {:.4}, mean {:.4}; coverage 50% {:.3}, 90% {:.3}",
        s.n_cells, s.wis_sum, s.wis_mean, s.coverage_50, s.coverage_90
    );
    Ok(())
}

// ----------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationEntryConfig {
    pub name: String,
    pub spec: ModelSpec,
    /// Hub forecast files, one per reference date.
    pub forecasts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub observations: PathBuf,
    pub baseline: AblationEntryConfig,
    #[serde(default)]
    pub variants: Vec<AblationEntryConfig>,
}

fn load_entry(cfg: &AblationEntryConfig, config_path: &Path) -> Result<AblationEntry> {
    let forecasts = cfg
        .forecasts
        .iter()
        .map(|p| read_hub_csv(open(&relative_to(config_path, p), "forecast file")?))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationEntry {
        name: cfg.name.clone(),
        spec: cfg.spec.clone(),
        forecasts,
    })
}

fn cmd_ablate(a: &AblateArgs, force: bool) -> Result<()> {
    let cfg: AblationConfig = read_toml(&a.config)?;
    prepare_out(
        &a.out,
        &["ablation.csv", "ablation.json", "datasets.csv", "forest.svg", SNAPSHOT],
        force,
    )?;
    let obs = Observations::read_csv(open(&relative_to(&a.config, &cfg.observations), "observations file")?)?;
    let baseline = load_entry(&cfg.baseline, &a.config)?;
    let variants = cfg
        .variants
        .iter()
        .map(|v| load_entry(v, &a.config))
        .collect::<Result<Vec<_>>>()?;
    let report = run_ablation(&baseline, &variants, &obs)?;
    report.write_csv(File::create(a.out.join("ablation.csv"))?)?;
    std::fs::write(
        a.out.join("ablation.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let mut w = csv::Writer::from_writer(File::create(a.out.join("datasets.csv"))?);
    for row in report.dataset_table(&cfg.baseline.spec.dataset) {
        w.serialize(row)?;
    }
    w.flush()?;
    if a.plot {
        write_svg(&a.out.join("forest.svg"), &forest_plot_svg("one-at-a-time ablation", &report)?)?;
    }
    write_snapshot(&a.out, &cfg)?;
    println!("{} rows written", report.rows.len());
    Ok(())
}

// ------------------------------------------------------------------- plot

fn cmd_plot(a: &PlotArgs, force: bool) -> Result<()> {
    match &a.kind {
        PlotKind::Fan {
            ensemble,
            season,
            location,
            reference_week,
            out,
        } => {
            prepare_file(out, force)?;
            let frames = io::read_frames(open(ensemble, "ensemble file")?, SourceTag::Modeled)?;
            let season = season.as_ref().map(|p| select_season(p, None)).transpose()?;
            write_svg(out, &fan_svg(&frames, season.as_ref(), location, *reference_week)?)
        }
        PlotKind::Envelope {
            frames,
            reference,
            out,
        } => {
            prepare_file(out, force)?;
            let gen = io::read_frames(open(frames, "frame file")?, SourceTag::Modeled)?;
            let reference = reference
                .as_ref()
                .map(|p| io::read_frames(open(p, "reference frames")?, SourceTag::Modeled))
                .transpose()?;
            write_svg(out, &envelope_svg(&gen, reference.as_deref())?)
        }
        PlotKind::Forest { report, out } => {
            prepare_file(out, force)?;
            let text = std::fs::read_to_string(report)
                .map_err(|e| Error::data(format!("{}: {e}", report.display())))?;
            let report: AblationReport = serde_json::from_str(&text)?;
            write_svg(out, &forest_plot_svg("one-at-a-time ablation", &report)?)
        }
    }
}

/// Re-export for callers that read score tables produced by `score`.
pub fn load_scores(path: &Path) -> Result<Vec<crate::evaluation::ScoreRecord>> {
    read_scores(open(path, "score table")?)
}
