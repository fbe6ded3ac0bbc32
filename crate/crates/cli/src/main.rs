use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dntdf::arch::{BackboneProfile, DecoderConfig, DEFAULT_PPM_BINS};
use dntdf::complexity::{cost_report, cost_table, CostRow, CostTable};
use dntdf::harness::data::{load_images, load_maps, load_samples, save_map, save_samples};
use dntdf::harness::evaluate::{evaluate, evaluate_maps, predict_all, threads_from_env};
use dntdf::harness::model_io::{load_model, save_model};
use dntdf::harness::synth::synth_generate;
use dntdf::harness::train::train;
use dntdf::harness::RunConfig;
use dntdf::mask::Mask;
use dntdf::metrics::{FMode, MetricReport};

#[derive(Parser)]
#[command(name = "dntdf", version, about = "Densely nested top-down flow saliency models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image/mask dataset
    Synth(SynthArgs),
    /// Train a model from a config file
    Train(TrainArgs),
    /// Evaluate a model (or saved maps) against masks
    Eval(EvalArgs),
    /// Write saliency maps for a directory of images
    Predict(PredictArgs),
    /// Count parameters and multiply-accumulates
    Count(CountArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives images/ and masks/
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PerImage,
    Pooled,
}

impl From<ModeArg> for FMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerImage => FMode::PerImage,
            ModeArg::Pooled => FMode::Pooled,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(
        long,
        required_unless_present = "predictions",
        conflicts_with = "predictions",
        requires = "images"
    )]
    model: Option<PathBuf>,
    /// Directory of saved P5 maps to score instead of running a model
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Also write the precision/recall curve as CSV
    #[arg(long)]
    pr: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per-image")]
    mode: ModeArg,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    backbone: String,
    #[arg(long, default_value_t = 4)]
    r: usize,
    #[arg(long, default_value_t = 288)]
    input: usize,
    /// Comma-separated ratios; prints one row per ratio
    #[arg(long, value_delimiter = ',')]
    table: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4)]
    pcsp: usize,
    #[arg(long)]
    no_ppm: bool,
    /// Comma-separated PPM bin sizes (default 1,2 for tiny, else 1,2,3,6)
    #[arg(long, value_delimiter = ',')]
    ppm_bins: Option<Vec<usize>>,
    #[arg(long)]
    csv: bool,
    /// Per-layer CSV (single ratio only)
    #[arg(long)]
    layers: Option<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let data = synth_generate(a.n, a.size, a.seed)?;
    save_samples(&a.out, &data)?;
    println!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let cfg = RunConfig::from_file(&a.config).with_context(|| format!("config {}", a.config.display()))?;
    let data = match (&cfg.train_images, &cfg.train_masks) {
        (Some(i), Some(m)) => load_samples(i, m)?,
        _ => synth_generate(cfg.synth_n, cfg.input_size, cfg.synth_seed)?,
    };
    let mut log = match &cfg.log {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => None,
    };
    let mut log_err = None;
    let out = train(&cfg, &data, |e| {
        let line = e.to_line();
        println!("{line}");
        if let Some(f) = log.as_mut() {
            if let Err(err) = writeln!(f, "{line}") {
                log_err.get_or_insert(err);
            }
        }
    })?;
    if let Some(err) = log_err {
        return Err(err).context("writing training log");
    }
    save_model(&cfg.model_out, &out.model)?;
    println!("saved {} to {}", out.model.arch.name(), cfg.model_out.display());
    Ok(())
}

fn finish_report(a: &EvalArgs, report: &MetricReport) -> Result<()> {
    let text = report.to_text();
    write_file(&a.report, &text)?;
    if let Some(p) = &a.pr {
        write_file(p, &report.pr_csv())?;
    }
    print!("{text}");
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mode = FMode::from(a.mode);
    if let Some(dir) = &a.predictions {
        let masks = load_mask_dir(&a.masks)?;
        let maps = load_maps(dir)?;
        if maps.len() != masks.len() {
            bail!(
                "{} maps in {} but {} masks in {}",
                maps.len(),
                dir.display(),
                masks.len(),
                a.masks.display()
            );
        }
        let mut preds = Vec::with_capacity(maps.len());
        let mut refs = Vec::with_capacity(maps.len());
        for (map, (id, mask)) in maps.into_iter().zip(&masks) {
            if &map.id != id {
                bail!("no map for mask {id}");
            }
            if (map.height, map.width) != (mask.height(), mask.width()) {
                bail!(
                    "{id}: map {}x{} vs mask {}x{}",
                    map.height,
                    map.width,
                    mask.height(),
                    mask.width()
                );
            }
            preds.push(map.data);
            refs.push(mask);
        }
        return finish_report(&a, &evaluate_maps(&preds, &refs, mode)?);
    }
    // clap guarantees --model and --images here
    let model = load_model(a.model.as_deref().expect("--model"))?;
    let data = load_samples(a.images.as_deref().expect("--images"), &a.masks)?;
    finish_report(&a, &evaluate(&model, &data, mode, threads_from_env())?)
}

/// Masks without images, fitted and thresholded like `load_samples`.
fn load_mask_dir(dir: &Path) -> Result<Vec<(String, Mask)>> {
    Ok(load_maps(dir)?
        .into_iter()
        .map(|m| {
            let mask = Mask::from_fn(m.height, m.width, |y, x| m.data[y * m.width + x] >= 128.0 / 255.0);
            (m.id, mask)
        })
        .collect())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let images = load_images(&a.images)?;
    let (ids, tensors): (Vec<String>, Vec<_>) = images.into_iter().unzip();
    let maps = predict_all(&model, &tensors, threads_from_env())?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (id, map) in ids.iter().zip(&maps) {
        let s = map.shape();
        save_map(&a.out.join(format!("{id}.pgm")), map.data(), s.h, s.w)?;
    }
    println!("wrote {} maps to {}", maps.len(), a.out.display());
    Ok(())
}

fn count(a: CountArgs) -> Result<()> {
    let profile = BackboneProfile::by_name(&a.backbone)?;
    let ppm_bins = match a.ppm_bins {
        Some(b) => b,
        None if profile.trainable => RunConfig::default().ppm_bins,
        None => DEFAULT_PPM_BINS.to_vec(),
    };
    let cfg = DecoderConfig {
        ratio: a.r,
        pcsp_count: a.pcsp,
        ppm_enabled: !a.no_ppm,
        ppm_bins,
        ..DecoderConfig::default()
    };
    let input = (a.input, a.input);
    match &a.table {
        Some(ratios) => {
            if a.layers.is_some() {
                bail!("--layers applies to a single ratio, not --table");
            }
            let t = cost_table(&profile, &cfg, ratios, input)?;
            print!("{}", if a.csv { t.to_csv() } else { t.to_text() });
        }
        None => {
            let graph = dntdf::arch::build_model(&profile, &cfg, input)?;
            let report = cost_report(&graph);
            if let Some(p) = &a.layers {
                write_file(p, &report.layers_csv())?;
            }
            let t = CostTable {
                backbone: profile.name.clone(),
                input,
                rows: vec![CostRow {
                    ratio: a.r,
                    decoder: report.decoder(),
                    total: report.total,
                }],
            };
            print!("{}", report.to_text());
            print!("{}", if a.csv { t.to_csv() } else { t.to_text() });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap prints usage to stderr and exits 2 on bad arguments
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Count(a) => count(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
