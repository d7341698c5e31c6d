//! `segdense` command line.
//!
//! Every subcommand reads from explicit paths and writes only below the
//! output directory (`--out`, else `paths.output_dir`, else `.`):
//!
//! | subcommand | writes |
//! |---|---|
//! | `synth` | `images/`, `masks/`, `manifest.tsv` |
//! | `prepare` | `train.tsv`, `test.tsv` |
//! | `augment` | `augmented/{images,masks}/`, `augmented/manifest.tsv` |
//! | `train` | `checkpoints/{phase}_final.safetensors`, `checkpoints/{phase}_log.tsv` |
//! | `predict` | `predictions/`, `overlays/` |
//! | `eval seg` | `seg_report.tsv` |
//! | `eval roc` | `roc_report.tsv` |

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::expand_dataset;
use crate::config::PipelineConfig;
use crate::data::{
    load_manifest, split_by_subject, synthesize_sample, DatasetManifest, Eye, IrisImage, ManifestEntry, Phase, Sample,
    SegmentationMask, MODEL_SIZE,
};
use crate::error::{Result, SegError};
use crate::eval::{
    gar_at_far, load_scores, nice1_error_named, roc_points, write_report, Polarity, RocSummary, ScoreSet,
};
use crate::infer::{binarize, postprocess, resize_mask_nearest};
use crate::infer::{confidence_bands, export_mask, export_overlay, predict_confidence, PredictOptions};
use crate::model::{build_model, load_checkpoint};
use crate::train::{run_training, TrainPhase};

#[derive(Debug, Parser)]
#[command(
    name = "segdense",
    version,
    about = "Iris segmentation with a dense-block fusion network"
)]
struct Cli {
    /// TOML pipeline configuration (falls back to $SEGDENSE_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic eye images, masks and a manifest.
    Synth {
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Split a manifest into subject-disjoint train and test manifests.
    Prepare {
        /// Defaults to `paths.manifest`, else `<out>/manifest.tsv`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Materialize the tenfold augmented training set at network resolution.
    Augment {
        /// Defaults to `<out>/train.tsv`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train one phase: pretrain on healthy eyes or finetune on cataract eyes.
    Train(TrainArgs),
    /// Predict masks for an image, a directory of PNGs or a manifest.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        postprocess: bool,
        #[arg(long)]
        overlay: bool,
    },
    /// Score masks or match scores.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PhaseArg {
    Pretrain,
    Finetune,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    phase: PhaseArg,
    /// Required for finetuning.
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Defaults to `<out>/augmented/manifest.tsv`, else `<out>/train.tsv`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Overrides the configured epoch count for this phase.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// NICE-I error between predicted and ground-truth mask directories.
    Seg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Verification rate at a false accept rate, plus the ROC table.
    Roc {
        #[arg(long)]
        genuine: PathBuf,
        #[arg(long)]
        impostor: PathBuf,
        #[arg(long, default_value_t = 0.001)]
        far: f64,
        /// Scores are distances rather than similarities.
        #[arg(long)]
        lower_is_match: bool,
    },
}

struct Context {
    config: PipelineConfig,
    out: PathBuf,
}

impl Context {
    fn checkpoint_dir(&self) -> PathBuf {
        match &self.config.paths.checkpoint_dir {
            Some(d) => self.out.join(d),
            None => self.out.join("checkpoints"),
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("segdense: {}", line.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("segdense: {e}");
            1
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = PipelineConfig::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .or_else(|| config.paths.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context { config, out };
    create_dir(&ctx.out)?;
    match cli.command {
        Command::Synth { count } => synth(&ctx, count),
        Command::Prepare {
            manifest,
            train_fraction,
        } => prepare(&ctx, manifest, train_fraction),
        Command::Augment { manifest } => augment(&ctx, manifest),
        Command::Train(args) => train(&ctx, args),
        Command::Predict {
            checkpoint,
            input,
            postprocess,
            overlay,
        } => predict(&ctx, &checkpoint, &input, postprocess, overlay),
        Command::Eval(EvalCommand::Seg { pred, gt }) => eval_seg(&ctx, &pred, &gt),
        Command::Eval(EvalCommand::Roc {
            genuine,
            impostor,
            far,
            lower_is_match,
        }) => eval_roc(&ctx, &genuine, &impostor, far, lower_is_match),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SegError::io(dir, e))
}

/// Writes samples as PNGs under `dir/{images,masks}` and returns their entries.
fn write_samples(dir: &Path, samples: &[Sample]) -> Result<Vec<ManifestEntry>> {
    let (images, masks) = (dir.join("images"), dir.join("masks"));
    create_dir(&images)?;
    create_dir(&masks)?;
    samples
        .iter()
        .map(|s| {
            let image_path = images.join(format!("{}.png", s.id));
            s.image.save_png(&image_path)?;
            let mask_path = match &s.mask {
                Some(m) => {
                    let p = masks.join(format!("{}.png", s.id));
                    m.save_png(&p)?;
                    Some(p)
                }
                None => None,
            };
            Ok(ManifestEntry {
                image_path,
                mask_path,
                subject_id: s.subject_id.clone(),
                eye: s.eye,
                phase: s.phase,
                sensor: s.sensor.clone(),
            })
        })
        .collect()
}

/// Two eyes per subject; subjects cycle through the three capture phases.
fn synth(ctx: &Context, count: usize) -> Result<()> {
    if count == 0 {
        return Err(SegError::Invalid("--count must be at least 1".into()));
    }
    let base = ctx.config.synth_config();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let phases = [Phase::Healthy, Phase::PreSurgery, Phase::PostSurgery];
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let subject = i / 2;
        let mut cfg = base.clone();
        cfg.phase = phases[subject % 3];
        let sample = synthesize_sample(&cfg, rng.random())?;
        samples.push(Sample {
            id: format!("eye{i:04}"),
            subject_id: format!("s{subject:03}"),
            eye: if i % 2 == 0 { Eye::Left } else { Eye::Right },
            ..sample
        });
    }
    let entries = write_samples(&ctx.out, &samples)?;
    let manifest = DatasetManifest::new(entries)?;
    manifest.write(&ctx.out.join("manifest.tsv"))?;
    println!("wrote {count} samples to {}", ctx.out.display());
    Ok(())
}

fn prepare(ctx: &Context, manifest: Option<PathBuf>, train_fraction: Option<f64>) -> Result<()> {
    let path = manifest
        .or_else(|| ctx.config.paths.manifest.clone())
        .unwrap_or_else(|| ctx.out.join("manifest.tsv"));
    let m = load_manifest(&path)?;
    let frac = train_fraction.unwrap_or(ctx.config.train_fraction);
    let (train, test) = split_by_subject(&m, frac, ctx.config.seed)?;
    train.write(&ctx.out.join("train.tsv"))?;
    test.write(&ctx.out.join("test.tsv"))?;
    println!(
        "train: {} entries / {} subjects, test: {} entries / {} subjects",
        train.len(),
        train.subjects().len(),
        test.len(),
        test.subjects().len()
    );
    Ok(())
}

fn augment(ctx: &Context, manifest: Option<PathBuf>) -> Result<()> {
    let path = manifest.unwrap_or_else(|| ctx.out.join("train.tsv"));
    let samples = load_manifest(&path)?
        .load_samples()?
        .iter()
        .map(|s| s.resized(MODEL_SIZE))
        .collect::<Result<Vec<_>>>()?;
    let expanded = expand_dataset(&samples, &ctx.config.augment)?;
    let dir = ctx.out.join("augmented");
    let entries = write_samples(&dir, &expanded)?;
    DatasetManifest::new(entries)?.write(&dir.join("manifest.tsv"))?;
    println!("expanded {} samples to {}", samples.len(), expanded.len());
    Ok(())
}

fn phase_matches(phase: TrainPhase, p: Phase) -> bool {
    match phase {
        TrainPhase::Pretrain => p == Phase::Healthy,
        TrainPhase::Finetune => p != Phase::Healthy,
    }
}

fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let phase = match args.phase {
        PhaseArg::Pretrain => TrainPhase::Pretrain,
        PhaseArg::Finetune => TrainPhase::Finetune,
    };
    if phase == TrainPhase::Finetune && args.init_checkpoint.is_none() {
        return Err(SegError::Invalid(
            "train --phase finetune requires --init-checkpoint PATH".into(),
        ));
    }
    let manifest = args.manifest.unwrap_or_else(|| {
        let augmented = ctx.out.join("augmented").join("manifest.tsv");
        if augmented.exists() {
            augmented
        } else {
            ctx.out.join("train.tsv")
        }
    });
    let m = load_manifest(&manifest)?;
    let selected = DatasetManifest {
        entries: m
            .entries
            .into_iter()
            .filter(|e| phase_matches(phase, e.phase))
            .collect(),
    };
    if selected.is_empty() {
        return Err(SegError::Invalid(format!(
            "{}: no samples for the {phase} phase",
            manifest.display()
        )));
    }
    let samples = selected
        .load_samples()?
        .iter()
        .map(|s| s.resized(MODEL_SIZE))
        .collect::<Result<Vec<_>>>()?;

    let mut config = ctx.config.train_config(phase);
    config.init_checkpoint = args.init_checkpoint;
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    let mut model = build_model(&ctx.config.model_spec(), ctx.config.seed)?;
    let total = config.epochs;
    let outcome = run_training(&mut model, &samples, &config, &ctx.checkpoint_dir(), |s| {
        eprintln!(
            "{phase} epoch {}/{total}: loss {:.6} over {} samples",
            s.epoch, s.mean_loss, s.samples
        );
    })?;
    println!("{}", outcome.final_checkpoint.display());
    Ok(())
}

/// `(id, image, ground truth if known)` from a PNG, a directory of PNGs or a manifest.
fn load_inputs(input: &Path) -> Result<Vec<(String, IrisImage, Option<SegmentationMask>)>> {
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| SegError::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(SegError::Invalid(format!("{}: no PNG images", input.display())));
        }
        files
            .iter()
            .map(|p| Ok((stem(p), IrisImage::load_png(p)?, None)))
            .collect()
    } else if input.extension().is_some_and(|x| x == "tsv") {
        load_manifest(input)?
            .load_samples()?
            .into_iter()
            .map(|s| Ok((s.id, s.image, s.mask)))
            .collect()
    } else {
        Ok(vec![(stem(input), IrisImage::load_png(input)?, None)])
    }
}

fn predict(ctx: &Context, checkpoint: &Path, input: &Path, post: bool, overlay: bool) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let th = ctx.config.thresholds;
    let inputs = load_inputs(input)?;
    let pred_dir = ctx.out.join("predictions");
    create_dir(&pred_dir)?;
    let overlay_dir = ctx.out.join("overlays");
    if overlay {
        create_dir(&overlay_dir)?;
    }
    let options = PredictOptions {
        threshold: th.binarize,
        postprocess: post,
        ..PredictOptions::default()
    };
    for (id, image, _) in &inputs {
        let map = predict_confidence(&model, &[image], options.input_size)?.remove(0);
        let mut mask = resize_mask_nearest(&binarize(&map, options.threshold)?, image.dims());
        if options.postprocess {
            mask = postprocess(&mask);
        }
        export_mask(&mask, &pred_dir.join(format!("{id}.png")))?;
        if overlay {
            let bands = confidence_bands(&map, th.band_low, th.band_high)?;
            export_overlay(image, &mask, &bands, &overlay_dir.join(format!("{id}.png")))?;
        }
    }
    println!("predicted {} masks into {}", inputs.len(), pred_dir.display());
    Ok(())
}

fn eval_seg(ctx: &Context, pred: &Path, gt: &Path) -> Result<()> {
    let listing = |dir: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| SegError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        v.sort();
        Ok(v)
    };
    let preds = listing(pred)?;
    if preds.is_empty() {
        return Err(SegError::Invalid(format!("{}: no predicted masks", pred.display())));
    }
    let (mut ids, mut p, mut t) = (Vec::new(), Vec::new(), Vec::new());
    for path in preds {
        let name = path.file_name().expect("listed file");
        let truth = gt.join(name);
        if !truth.exists() {
            return Err(SegError::Invalid(format!(
                "no ground truth {} for prediction {}",
                truth.display(),
                path.display()
            )));
        }
        ids.push(path.file_stem().expect("listed file").to_string_lossy().into_owned());
        p.push(SegmentationMask::load_png(&path)?);
        t.push(SegmentationMask::load_png(&truth)?);
    }
    let score = nice1_error_named(&ids, &p, &t)?;
    write_report(Some(&score), None, &ctx.out.join("seg_report.tsv"))?;
    println!("average error {:.6} over {} masks", score.average_error, ids.len());
    Ok(())
}

fn eval_roc(ctx: &Context, genuine: &Path, impostor: &Path, far: f64, lower: bool) -> Result<()> {
    if !(far > 0.0 && far < 1.0) {
        return Err(SegError::Invalid(format!("--far must be in (0, 1), got {far}")));
    }
    let polarity = if lower {
        Polarity::LowerIsMatch
    } else {
        Polarity::HigherIsMatch
    };
    let scores = ScoreSet::new(load_scores(genuine)?, load_scores(impostor)?, polarity)?;
    let operating = gar_at_far(&scores, far)?;
    let summary = RocSummary {
        points: roc_points(&scores),
        operating,
        far_target: far,
    };
    write_report(None, Some(&summary), &ctx.out.join("roc_report.tsv"))?;
    println!(
        "GAR {:.4} at FAR {far} (threshold {})",
        operating.gar, operating.threshold
    );
    Ok(())
}
