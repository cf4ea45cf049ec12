//! `ivus`: phantom generation, training, segmentation and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use image::{ImageBuffer, Luma, Rgb, RgbImage};
use log::info;
use ndarray::Array2;
use rayon::prelude::*;

use ivus_core::data::{load_frame, read_label_png, write_f32_grid, write_label_png, CartesianFrame, FrameOptions, LabelMap, Tissue};
use ivus_core::dataset::{load_corpus, Sample};
use ivus_core::eval::{crossval_prepared, score_labels, FrameScore, MetricReport};
use ivus_core::forest::{train_forest, ForestModel, TrainingSet};
use ivus_core::phantom::{phantom_suite, SuiteVariation};
use ivus_core::pipeline::{frame_training_set, prepare_frame, segment_prepared, PreparedFrame};
use ivus_core::seeds::SeedMode;
use ivus_core::{Error, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "ivus", version, about = "IVUS lumen and EEL segmentation")]
struct Cli {
    /// Worker threads for frame-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Pipeline configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate labelled synthetic phantom frames.
    PhantomGen(PhantomArgs),
    /// Train a forest model on a labelled corpus.
    Train(TrainArgs),
    /// Segment frames with a trained model.
    Segment(SegmentArgs),
    /// Score predicted label maps against a labelled corpus.
    Evaluate(EvaluateArgs),
    /// Grouped k-fold cross-validation of the full pipeline.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
struct PipelineFlags {
    /// Skip the nested-region topology correction.
    #[arg(long)]
    no_topology: bool,

    /// Seeding mode: `sparse` (walker) or `dense-argmax` (forest only).
    #[arg(long, value_name = "MODE")]
    seeds: Option<SeedMode>,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// Number of phantoms.
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side of the square Cartesian frame in pixels.
    #[arg(long, default_value_t = 384)]
    size: usize,
    /// Scan lines and depth samples of the simulated polar acquisition.
    #[arg(long, default_value_t = 256)]
    polar: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus root (defaults to `paths.data_root`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model file (defaults to `paths.model`).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Trained model (defaults to `paths.model`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory (defaults to `paths.output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Frame images to segment.
    #[arg(required = true)]
    frames: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory holding `<name>_pred.png` label images.
    #[arg(long)]
    pred: PathBuf,
    /// Labelled corpus root (defaults to `paths.data_root`).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report directory (defaults to `paths.output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    /// Corpus root (defaults to `paths.data_root`).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Report directory (defaults to `paths.output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(Error::Config(_)) => 2,
            Failure::Core(Error::Numerical { .. } | Error::Solvability { .. }) => 4,
            Failure::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage: {msg}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ivus: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return usage("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            PipelineConfig::from_text(&text)?
        }
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::PhantomGen(args) => phantom_gen(&args, &config),
        Command::Train(args) => train(&args, config),
        Command::Segment(args) => segment(&args, config),
        Command::Evaluate(args) => evaluate(&args, config),
        Command::Crossval(args) => crossval(&args, config),
    }
}

fn resolve(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    match flag.as_ref().or(fallback.as_ref()) {
        Some(p) => Ok(p.clone()),
        None => usage(format!("no {what} given")),
    }
}

fn existing(path: PathBuf, what: &str) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        usage(format!("{what} {} does not exist", path.display()))
    }
}

fn apply_flags(mut config: PipelineConfig, flags: &PipelineFlags) -> PipelineConfig {
    if flags.no_topology {
        config.topology = false;
    }
    if let Some(mode) = flags.seeds {
        config.seeds.mode = mode;
    }
    config
}

fn frame_options(config: &PipelineConfig) -> FrameOptions {
    FrameOptions {
        pixel_spacing_mm: config.pixel_spacing_mm,
        catheter_center: config.catheter_center,
    }
}

fn write_config_echo(dir: &Path, config: &PipelineConfig) -> CliResult<()> {
    std::fs::write(dir.join("config.txt"), config.to_text())?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn save_u16(path: &Path, frame: &CartesianFrame) -> CliResult<()> {
    let (h, w) = frame.intensities().dim();
    let raw: Vec<u16> = frame
        .intensities()
        .iter()
        .map(|v| (v * 65535.0).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    img.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn phantom_gen(args: &PhantomArgs, config: &PipelineConfig) -> CliResult<()> {
    if args.count == 0 {
        return usage("--count must be at least 1");
    }
    let variation = SuiteVariation {
        n_scanlines: args.polar,
        n_depth: args.polar,
        ..Default::default()
    };
    std::fs::create_dir_all(&args.out)?;
    let suite = phantom_suite(args.count, &variation, args.seed)?;
    suite.par_iter().enumerate().try_for_each(|(i, phantom)| -> CliResult<()> {
        let name = format!("phantom_{i:03}");
        let (frame, labels) = phantom.to_cartesian(args.size, config.pixel_spacing_mm)?;
        save_u16(&args.out.join(format!("{name}_frame.png")), &frame)?;
        write_label_png(args.out.join(format!("{name}_labels.png")), &labels)?;
        let spec = serde_json::to_value(&phantom.spec).map_err(|e| Error::Format(e.to_string()))?;
        write_json(
            &args.out.join(format!("{name}_spec.json")),
            &serde_json::json!({ "name": name, "size": args.size, "spec": spec }),
        )
    })?;
    let variation = serde_json::to_value(&variation).map_err(|e| Error::Format(e.to_string()))?;
    write_json(
        &args.out.join("suite.json"),
        &serde_json::json!({ "count": args.count, "seed": args.seed, "size": args.size, "variation": variation }),
    )?;
    println!("wrote {} phantoms to {}", args.count, args.out.display());
    Ok(())
}

fn load_labelled(root: PathBuf, config: &PipelineConfig) -> CliResult<Vec<Sample>> {
    let root = existing(root, "corpus root")?;
    Ok(load_corpus(root, &frame_options(config))?)
}

fn prepare_all(corpus: &[Sample], config: &PipelineConfig) -> CliResult<Vec<PreparedFrame>> {
    let start = Instant::now();
    let prepared = corpus
        .par_iter()
        .map(|s| prepare_frame(&s.frame, config))
        .collect::<ivus_core::Result<Vec<_>>>()?;
    info!("prepared {} frames in {:.1?}", prepared.len(), start.elapsed());
    Ok(prepared)
}

/// Every tenth pooled sample goes to the holdout split.
fn holdout_split(set: &TrainingSet) -> CliResult<(TrainingSet, TrainingSet)> {
    let mut fit = TrainingSet::new(set.n_features()).with_feature_hash(set.feature_hash().to_string());
    let mut held = TrainingSet::new(set.n_features()).with_feature_hash(set.feature_hash().to_string());
    for i in 0..set.len() {
        let target = if i % 10 == 9 { &mut held } else { &mut fit };
        target.push(set.row(i), set.label(i))?;
    }
    Ok((fit, held))
}

fn train(args: &TrainArgs, config: PipelineConfig) -> CliResult<()> {
    let data = resolve(&args.data, &config.data_root, "training corpus (--data)")?;
    let model_path = resolve(&args.model, &config.model_path, "model path (--model)")?;
    let corpus = load_labelled(data, &config)?;
    let prepared = prepare_all(&corpus, &config)?;
    let mut pooled: Option<TrainingSet> = None;
    for (k, (p, s)) in prepared.iter().zip(&corpus).enumerate() {
        let set = frame_training_set(p, &s.labels, &config, config.rng_seed.wrapping_add(k as u64))?;
        match pooled.as_mut() {
            Some(all) => all.extend(&set)?,
            None => pooled = Some(set),
        }
    }
    let pooled = pooled.ok_or_else(|| Error::Training("no training frames".into()))?;
    let (fit, held) = holdout_split(&pooled)?;
    let model = train_forest(&fit, &config.forest)?;
    let correct = (0..held.len())
        .filter(|&i| {
            let p = model.predict(held.row(i));
            let best = (0..3).fold(0, |b, c| if p[c] > p[b] { c } else { b });
            best == held.label(i).index()
        })
        .count();
    let accuracy = correct as f64 / held.len().max(1) as f64;
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&model_path)?;

    let counts = |set: &TrainingSet| {
        let c = set.class_counts();
        serde_json::json!({ "lumen": c[0], "media": c[1], "externa": c[2] })
    };
    let log_path = model_path.with_extension("train.json");
    write_json(
        &log_path,
        &serde_json::json!({
            "frames": corpus.len(),
            "train_counts": counts(&fit),
            "holdout_counts": counts(&held),
            "holdout_accuracy": accuracy,
            "config": config.to_text(),
        }),
    )?;
    let c = fit.class_counts();
    println!(
        "trained on {} frames: lumen {}, media {}, externa {} samples",
        corpus.len(),
        c[0],
        c[1],
        c[2]
    );
    println!("holdout accuracy {accuracy:.4} on {} samples", held.len());
    println!("model written to {}", model_path.display());
    Ok(())
}

fn frame_stem(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
    stem.strip_suffix("_frame").unwrap_or(stem).to_string()
}

fn boundary(region: &Array2<bool>) -> Array2<bool> {
    let (h, w) = region.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        region[(y, x)]
            && (y == 0 || x == 0 || y + 1 == h || x + 1 == w || !region[(y - 1, x)] || !region[(y + 1, x)] || !region[(y, x - 1)] || !region[(y, x + 1)])
    })
}

/// Frame in gray with the lumen contour in red and the EEL contour in green.
fn overlay(frame: &CartesianFrame, labels: &LabelMap) -> RgbImage {
    let lumen = boundary(&labels.lumen_region());
    let eel = boundary(&labels.eel_region());
    let img = frame.intensities();
    RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let idx = (y as usize, x as usize);
        if lumen[idx] {
            Rgb([255, 0, 0])
        } else if eel[idx] {
            Rgb([0, 255, 0])
        } else {
            let g = (img[idx].clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([g, g, g])
        }
    })
}

fn segment(args: &SegmentArgs, config: PipelineConfig) -> CliResult<()> {
    let config = apply_flags(config, &args.pipeline);
    let model_path = existing(resolve(&args.model, &config.model_path, "model (--model)")?, "model")?;
    let out = resolve(&args.out, &config.output_dir, "output directory (--out)")?;
    let frames = args
        .frames
        .iter()
        .map(|f| existing(f.clone(), "frame"))
        .collect::<CliResult<Vec<_>>>()?;
    let model = ForestModel::load(&model_path)?;
    std::fs::create_dir_all(&out)?;
    write_config_echo(&out, &config)?;
    let options = frame_options(&config);
    let results = frames
        .par_iter()
        .map(|path| -> CliResult<_> {
            let frame = load_frame(path, &options)?;
            let prepared = prepare_frame(&frame, &config)?;
            let seg = segment_prepared(&model, &prepared, &config)?;
            Ok((path, frame, seg))
        })
        .collect::<CliResult<Vec<_>>>()?;
    for (path, frame, seg) in results {
        let stem = frame_stem(path);
        write_label_png(out.join(format!("{stem}_pred.png")), &seg.labels)?;
        for (k, tissue) in Tissue::ALL.iter().enumerate() {
            write_f32_grid(out.join(format!("{stem}_posterior_{}.f32", tissue.name())), &seg.posteriors[k])?;
        }
        overlay(&frame, &seg.labels)
            .save(out.join(format!("{stem}_overlay.png")))
            .map_err(|e| Error::Format(e.to_string()))?;
        write_json(
            &out.join(format!("{stem}_segment.json")),
            &serde_json::json!({
                "frame": path.display().to_string(),
                "model": model_path.display().to_string(),
                "seeding_fallback": seg.seeding_fallback,
                "seed_thresholds": seg.seed_thresholds,
                "config": config.to_text(),
            }),
        )?;
        let note = if seg.seeding_fallback { " (seeding fallback)" } else { "" };
        println!("{stem}: lumen {} px, EEL {} px{note}", seg.labels.count(Tissue::Lumen), seg.labels.eel_region().iter().filter(|&&v| v).count());
    }
    Ok(())
}

fn write_report(out: &Path, report: &MetricReport, method: &str, config: &PipelineConfig) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let table = report.to_table(method);
    std::fs::write(out.join("report.txt"), &table)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    write_config_echo(out, config)?;
    print!("{table}");
    Ok(())
}

fn evaluate(args: &EvaluateArgs, config: PipelineConfig) -> CliResult<()> {
    let truth = resolve(&args.truth, &config.data_root, "ground-truth corpus (--truth)")?;
    let out = resolve(&args.out, &config.output_dir, "output directory (--out)")?;
    let pred_dir = existing(args.pred.clone(), "prediction directory")?;
    let corpus = load_labelled(truth, &config)?;
    let frames = corpus
        .par_iter()
        .map(|s| -> CliResult<FrameScore> {
            let pred = read_label_png(pred_dir.join(format!("{}_pred.png", s.name)))?;
            let (lumen, eel) = score_labels(&pred, &s.labels, config.pixel_spacing_mm)?;
            Ok(FrameScore {
                name: s.name.clone(),
                group: s.group.clone(),
                fold: None,
                lumen,
                eel,
                fallback: false,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = MetricReport {
        frames,
        folds: Default::default(),
        config_echo: config.to_text(),
        hd_unit: if config.pixel_spacing_mm.is_some() { "mm" } else { "px" }.into(),
    };
    write_report(&out, &report, "evaluated", &config)
}

fn crossval(args: &CrossvalArgs, config: PipelineConfig) -> CliResult<()> {
    let config = apply_flags(config, &args.pipeline);
    let data = resolve(&args.data, &config.data_root, "corpus (--data)")?;
    let out = resolve(&args.out, &config.output_dir, "output directory (--out)")?;
    let corpus = load_labelled(data, &config)?;
    let prepared = prepare_all(&corpus, &config)?;
    let report = crossval_prepared(&corpus, &prepared, args.folds, &config)?;
    let method = match config.seeds.mode {
        SeedMode::Sparse => "walker",
        SeedMode::DenseArgmax => "forest",
    };
    write_report(&out, &report, method, &config)
}
