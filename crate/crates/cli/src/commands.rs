//! Subcommand definitions and handlers.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmt::masking::{gen_freeform_mask, gen_stationary_mask, MaskSequence};
use dmt::pipeline::{forward, load_checkpoint, save_checkpoint, FrameSequence, DOWNSCALE};
use dmt::training::{check_prior, pretrain_image, train_video, write_log_csv, TrainConfig};

use crate::ablate::run_ablation;
use crate::bench::{run_bench, BenchSettings};
use crate::error::CliError;
use crate::imageio::{list_images, read_image, write_image, Image};
use crate::metrics::MetricReport;
use crate::settings::Settings;

const AFTER_HELP: &str = "\
Exit codes: 0 success, 1 usage error, 2 data error.

Masks on disk are grayscale images where a pixel value >= 128 marks a HOLE
(white = missing). They are inverted to validity (1 = known pixel) on load.
Frames are binary PPM (P6) or PNG, masks binary PGM (P5) or PNG; PNG needs
a build with `--features png`.";

#[derive(Debug, Parser)]
#[command(name = "dmt", version, about = "Masked transformer inpainting toolkit", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attention MACs and latency of the masked stack versus hole ratio.
    #[command(after_help = "\
Writes <out>.csv with columns
  mask_ratio,measured_ratio,n_tokens,valid_tokens,formula_macs,counted_macs,mean_ms,std_ms
and <out>.json with keys config{layers,dim,heads,frames,grid_height,grid_width,seed},
warmup_runs, repetitions and rows[] holding the CSV columns as keys.")]
    Bench(BenchArgs),
    /// Train the image prior or the video model on synthetic clips.
    #[command(after_help = "\
The log is CSV with columns step,loss_total,loss_rec,loss_mig.
Config keys: L d heads ffn_hidden K warp_k warp_s warp_p C token_selection
mask_activation use_rfc lr lambda_rec lambda_mig batch H W T clips mask mask_ratio.")]
    Train(TrainArgs),
    /// Fill holes in a folder of frames.
    Inpaint(InpaintArgs),
    /// PSNR and SSIM of predicted frames against ground truth.
    #[command(after_help = "\
Prints CSV with columns frame,psnr_db,ssim and a final `mean` row; `inf`
marks identical frames. --json writes keys frames[]{name,psnr,psnr_infinite,ssim},
mean_psnr, mean_psnr_infinite, mean_ssim, hole_ratio (psnr is null when infinite).")]
    Eval(EvalArgs),
    /// Write seeded hole masks (hole = 255).
    Genmask(GenmaskArgs),
    /// Train and score the component ablation variants.
    #[command(after_help = "\
Variants: full, no_token_selection, no_mask_activation, no_rfc, no_mig.
Writes <out>.csv with columns variant,psnr_db,ssim,final_loss_rec and
<out>.json with keys steps, eval_clips, rows[].")]
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated hole ratios in [0, 0.95].
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.6,0.9")]
    pub ratios: Vec<f64>,
    /// Timed runs per ratio (after 3 warmup runs).
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Frame height in pixels (token grid is a quarter of it).
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Model config file; its transformer settings are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of layers (default 1, or the config file's L).
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; `.csv` and `.json` are appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Image,
    Video,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: TrainMode,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Image prior checkpoint (video mode).
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Training log (default: checkpoint path with `.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Hole masks, only used for the reported hole ratio.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskType {
    Freeform,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskFormat {
    Pgm,
    Png,
}

#[derive(Debug, Args)]
pub struct GenmaskArgs {
    #[arg(long = "type", value_enum)]
    pub kind: MaskType,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    /// Hole ratio (freeform) or rectangle area fraction (stationary).
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "pgm")]
    pub format: MaskFormat,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Held-out clips used for scoring.
    #[arg(long, default_value_t = 8)]
    pub eval_clips: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; `.csv` and `.json` are appended.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bench(a) => bench(a),
        Command::Train(a) => train(a),
        Command::Inpaint(a) => inpaint(a),
        Command::Eval(a) => eval(a),
        Command::Genmask(a) => genmask(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {}", path.display(), e)))
}

fn load_settings(path: Option<&Path>) -> Result<Settings, CliError> {
    path.map_or_else(|| Ok(Settings::default()), Settings::load)
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    if a.height % DOWNSCALE != 0 || a.width % DOWNSCALE != 0 {
        return Err(CliError::Usage(format!(
            "{}x{} is not divisible by {}",
            a.height, a.width, DOWNSCALE
        )));
    }
    let mut dmt = match &a.config {
        Some(p) => Settings::load(p)?.train.model.dmt,
        None => BenchSettings::default().dmt,
    };
    if let Some(l) = a.layers {
        dmt.layers = l;
    }
    let report = run_bench(&BenchSettings {
        dmt,
        frames: a.frames,
        grid_height: a.height / DOWNSCALE,
        grid_width: a.width / DOWNSCALE,
        ratios: a.ratios,
        repetitions: a.reps,
        seed: a.seed,
    })?;
    write(&with_suffix(&a.out, ".csv"), report.to_csv())?;
    write(&with_suffix(&a.out, ".json"), report.to_json())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let settings = load_settings(a.config.as_deref())?;
    let config = TrainConfig {
        seed: a.seed,
        ..settings.train
    };
    let dataset = dmt::training::SyntheticDatasetSpec {
        seed: a.seed,
        ..settings.dataset
    };
    let out = match a.mode {
        TrainMode::Image => pretrain_image(&config, &dataset, a.steps)?,
        TrainMode::Video => {
            let path = a.prior.as_ref().ok_or_else(|| {
                CliError::Usage("video training needs --prior <checkpoint>".into())
            })?;
            let prior = load_checkpoint(path).map_err(|e| {
                CliError::Data(format!("cannot load prior {}: {}", path.display(), e))
            })?;
            check_prior(&config.model, &prior)?;
            train_video(&config, &dataset, &prior, a.steps)?
        }
    };
    save_checkpoint(&out.params, &a.out)?;
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("log.csv"));
    let mut buf = Vec::new();
    write_log_csv(&out.log, &mut buf)?;
    write(&log_path, buf)?;
    if let Some(last) = out.log.last() {
        println!("{}\n{}", dmt::training::LogRow::CSV_HEADER, last.csv_line());
    }
    Ok(())
}

/// Frames of a folder as one sequence plus their file names.
fn read_frames(dir: &Path) -> Result<(FrameSequence, Vec<PathBuf>), CliError> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(CliError::Data(format!(
            "no frames found in {}",
            dir.display()
        )));
    }
    let images = paths
        .iter()
        .map(|p| read_image(p))
        .collect::<Result<Vec<_>, _>>()?;
    let (w, h) = (images[0].width, images[0].height);
    if let Some((p, img)) = paths
        .iter()
        .zip(&images)
        .find(|(_, i)| (i.width, i.height) != (w, h))
    {
        return Err(CliError::Data(format!(
            "dimension mismatch: {} is {}x{}, expected {}x{}",
            p.display(),
            img.width,
            img.height,
            w,
            h
        )));
    }
    let data: Vec<f64> = images.iter().flat_map(Image::to_planar_rgb).collect();
    Ok((FrameSequence::new(images.len(), h, w, data)?, paths))
}

fn read_masks(dir: &Path, frames: usize, h: usize, w: usize) -> Result<MaskSequence, CliError> {
    let paths = list_images(dir)?;
    if paths.len() != frames {
        return Err(CliError::Data(format!(
            "count mismatch: {} frames but {} masks",
            frames,
            paths.len()
        )));
    }
    let mut maps = Vec::with_capacity(frames);
    for p in &paths {
        let img = read_image(p)?;
        if (img.height, img.width) != (h, w) {
            return Err(CliError::Data(format!(
                "dimension mismatch: mask {} is {}x{}, frames are {}x{}",
                p.display(),
                img.width,
                img.height,
                w,
                h
            )));
        }
        maps.push(img.to_mask());
    }
    Ok(MaskSequence::new(maps)?)
}

fn inpaint(a: InpaintArgs) -> Result<(), CliError> {
    let (frames, paths) = read_frames(&a.frames)?;
    let (h, w) = (frames.height(), frames.width());
    if h % DOWNSCALE != 0 || w % DOWNSCALE != 0 {
        return Err(CliError::Data(format!(
            "dimension mismatch: {w}x{h} frames are not divisible by {DOWNSCALE}"
        )));
    }
    let masks = read_masks(&a.masks, frames.frames(), h, w)?;
    let params = load_checkpoint(&a.checkpoint)
        .map_err(|e| {
            CliError::Data(format!(
                "cannot load checkpoint {}: {}",
                a.checkpoint.display(),
                e
            ))
        })?
        .frozen();
    let out = forward(&frames, &masks, &params, false)?;
    fs::create_dir_all(&a.out)?;
    for (t, p) in paths.iter().enumerate() {
        let name = p.file_name().expect("listed files have names");
        write_image(
            &a.out.join(name),
            &Image::from_planar_rgb(w, h, out.composed.frame_data(t)),
        )?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let (pred, names) = read_frames(&a.pred)?;
    let (truth, _) = read_frames(&a.truth)?;
    if pred.frames() != truth.frames() {
        return Err(CliError::Data(format!(
            "count mismatch: {} predicted frames, {} ground-truth frames",
            pred.frames(),
            truth.frames()
        )));
    }
    let hole_ratio = match &a.masks {
        Some(dir) => Some(
            1.0 - read_masks(dir, pred.frames(), pred.height(), pred.width())?.validity_fraction(),
        ),
        None => None,
    };
    let names: Vec<String> = names
        .iter()
        .map(|p| {
            p.file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
        })
        .collect();
    let report = MetricReport::new(&names, &pred, &truth, hole_ratio)?;
    print!("{}", report.to_csv());
    if let Some(path) = &a.json {
        write(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    Ok(())
}

fn genmask(a: GenmaskArgs) -> Result<(), CliError> {
    if a.height == 0 || a.width == 0 || a.count == 0 {
        return Err(CliError::Usage(
            "height, width and count must be positive".into(),
        ));
    }
    let ok = match a.kind {
        MaskType::Freeform => (0.0..=dmt::masking::MAX_FREEFORM_RATIO).contains(&a.ratio),
        MaskType::Stationary => a.ratio > 0.0 && a.ratio <= 1.0,
    };
    if !ok {
        return Err(CliError::Usage(format!(
            "ratio {} is out of range for {:?} masks",
            a.ratio, a.kind
        )));
    }
    fs::create_dir_all(&a.out)?;
    let ext = match a.format {
        MaskFormat::Pgm => "pgm",
        MaskFormat::Png => "png",
    };
    for i in 0..a.count {
        let seed = a.seed.wrapping_add(i as u64);
        let mask = match a.kind {
            MaskType::Freeform => gen_freeform_mask(a.height, a.width, a.ratio, seed)?,
            MaskType::Stationary => gen_stationary_mask(a.height, a.width, a.ratio, seed)?,
        };
        write_image(
            &a.out.join(format!("mask_{i:04}.{ext}")),
            &Image::from_mask(&mask),
        )?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let settings = load_settings(a.config.as_deref())?;
    if a.eval_clips == 0 {
        return Err(CliError::Usage("--eval-clips must be positive".into()));
    }
    let report = run_ablation(&settings, a.steps, a.eval_clips, a.seed)?;
    write(&with_suffix(&a.out, ".csv"), report.to_csv())?;
    write(
        &with_suffix(&a.out, ".json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    print!("{}", report.to_csv());
    Ok(())
}
