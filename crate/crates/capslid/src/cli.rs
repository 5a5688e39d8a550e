//! Command-line interface. Structured results go to standard output as
//! JSON; logs go to standard error.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use capslid_core::capsnet::Prediction;
use capslid_core::dsp::{spectrogram_to_pgm, stft, StftConfig, CORPUS_SAMPLE_RATE, INPUT_COLS, INPUT_ROWS};
use capslid_core::nonclass::{calibrate_from_predictions, ThresholdTable};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ThresholdJson};
use crate::corpus::{build_corpus, load_split, manifest_root, read_manifest, CorpusSpec, Split};
use crate::eval::{confusion_csv, detect_all, evaluate, predict_all, roc_csv, segment_and_classify};
use crate::pipeline::{read_wav, read_wav_at, signal_to_input, stft_for_clip};
use crate::train::{write_stats_jsonl, TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(name = "capslid", version, about = "Capsule-network spoken language identification")]
pub struct Cli {
    /// Global seed; falls back to the CAPSLID_SEED environment variable.
    #[arg(long, global = true, env = "CAPSLID_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus (WAV files and manifest.jsonl).
    GenData(GenDataArgs),
    /// Render spectrogram and model-input images (PGM) for manifest records.
    Preprocess(PreprocessArgs),
    /// Train a model and write a checkpoint; prints one JSON line per epoch.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest split; prints a metrics report.
    Eval(EvalArgs),
    /// Classify one WAV file.
    Predict(PredictArgs),
    /// Compute out-of-set thresholds on a manifest split.
    Calibrate(CalibrateArgs),
    /// Classify with out-of-set detection (one file or a whole split).
    Detect(DetectArgs),
    /// Classify consecutive clips of a long recording.
    Segment(SegmentArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub nonclass_classes: usize,
    #[arg(long, default_value_t = 200)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub calib_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub nonclass_per_class: usize,
    /// Clip duration in seconds.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
}

#[derive(Debug, Args)]
pub struct ClipArgs {
    /// Clip length in seconds (5 or 10); selects the spectrogram preset.
    #[arg(long, default_value_t = 5)]
    pub clip_seconds: u32,
    /// Override the number of frequency bins of the preset.
    #[arg(long)]
    pub n_bins: Option<usize>,
    /// Override the spectrogram frames per second of the preset.
    #[arg(long)]
    pub pps: Option<u32>,
}

impl ClipArgs {
    fn stft(&self) -> anyhow::Result<StftConfig> {
        let mut cfg = stft_for_clip(self.clip_seconds)?;
        if let Some(n) = self.n_bins {
            cfg.n_bins = n;
        }
        if let Some(p) = self.pps {
            cfg.pps = p;
        }
        cfg.validate(CORPUS_SAMPLE_RATE)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the images.
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to one split (train, test, calib, nonclass).
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Global gradient-norm clipping threshold.
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Continue from the checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: bool,
    /// Also append epoch statistics (JSON Lines) to this file.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub clip: ClipArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Write confusion.csv and roc.csv into this directory.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// WAV file to classify (first clip only).
    #[arg(long)]
    pub input: PathBuf,
    /// Threshold JSON; defaults to thresholds stored in the checkpoint.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "calib")]
    pub split: String,
    /// Also write the thresholds as standalone JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the checkpoint file unchanged.
    #[arg(long)]
    pub no_store: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// WAV file to classify.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    /// Run on every record of --split instead of a single file.
    #[arg(long, requires = "split")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Threshold JSON; defaults to thresholds stored in the checkpoint.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Threshold JSON; defaults to thresholds stored in the checkpoint.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .with_context(|| format!("unknown split {s:?} (expected train, test, calib or nonclass)"))
}

fn emit(value: &impl Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct PredictionJson<'a> {
    label: usize,
    norms: &'a [f64],
    non_class: bool,
}

impl<'a> From<&'a Prediction> for PredictionJson<'a> {
    fn from(p: &'a Prediction) -> Self {
        Self { label: p.label, norms: &p.norms, non_class: p.is_non_class }
    }
}

fn thresholds_for(checkpoint: &Checkpoint, file: Option<&Path>) -> anyhow::Result<Option<ThresholdTable>> {
    match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let j: ThresholdJson = serde_json::from_str(&text)?;
            Ok(Some(ThresholdTable::try_from(j)?))
        }
        None => Ok(checkpoint.thresholds.clone()),
    }
}

fn model_input(checkpoint: &Checkpoint, wav: &Path) -> anyhow::Result<capslid_core::dsp::ModelInput> {
    let signal = read_wav(wav)?;
    Ok(signal_to_input(&signal, checkpoint.config.clip_seconds, &checkpoint.config.stft)?)
}

/// Executes the parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let workers = cli.workers.unwrap_or_else(rayon::current_num_threads).max(1);
    match cli.command {
        Command::GenData(a) => {
            let spec = CorpusSpec {
                in_set_classes: a.classes,
                nonclass_classes: a.nonclass_classes,
                train_per_class: a.train_per_class,
                test_per_class: a.test_per_class,
                calib_per_class: a.calib_per_class,
                nonclass_per_class: a.nonclass_per_class,
                duration_seconds: a.duration,
                base_seed: cli.seed,
            };
            let records = build_corpus(&spec, &a.out)?;
            let count = |s: Split| records.iter().filter(|r| r.split == s).count();
            emit(&json!({
                "manifest": a.out.join(crate::corpus::MANIFEST_FILE),
                "records": records.len(),
                "train": count(Split::Train),
                "test": count(Split::Test),
                "calib": count(Split::Calib),
                "nonclass": count(Split::Nonclass),
            }))
        }
        Command::Preprocess(a) => {
            let stft_cfg = a.clip.stft()?;
            let split = a.split.as_deref().map(parse_split).transpose()?;
            let root = manifest_root(&a.manifest);
            let records: Vec<_> = read_manifest(&a.manifest)?
                .into_iter()
                .filter(|r| split.is_none_or(|s| r.split == s))
                .collect();
            for s in Split::ALL {
                let dir = a.out.join(s.as_str());
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            records.par_iter().try_for_each(|r| -> anyhow::Result<()> {
                let signal = read_wav_at(&root.join(&r.path), CORPUS_SAMPLE_RATE)?;
                let first = capslid_core::dsp::clip_segments(&signal, a.clip.clip_seconds)?.remove(0);
                let spec = stft(&first, &stft_cfg)?;
                let input = capslid_core::dsp::resize_to_model_input(&spec);
                let stem = a.out.join(r.path.trim_end_matches(".wav"));
                std::fs::write(stem.with_extension("spec.pgm"), spectrogram_to_pgm(&spec))?;
                let mut pgm = format!("P5\n{INPUT_COLS} {INPUT_ROWS}\n255\n").into_bytes();
                pgm.extend(input.pixels().iter().map(|v| (v * 255.0).round() as u8));
                std::fs::write(stem.with_extension("input.pgm"), pgm)?;
                Ok(())
            })?;
            emit(&json!({ "processed": records.len(), "out_dir": a.out }))
        }
        Command::Train(a) => {
            let stft_cfg = a.clip.stft()?;
            let records = read_manifest(&a.manifest)?;
            let data = load_split(&manifest_root(&a.manifest), &records, Split::Train, &stft_cfg, a.clip.clip_seconds)?;
            log::info!("loaded {} training clips", data.len());
            let mut trainer = if a.resume {
                let ck = load_checkpoint(&a.checkpoint)?;
                let mut cfg = ck.config.clone();
                cfg.epochs = ck.epoch + a.epochs;
                Trainer::resume(ck.params, ck.adam.unwrap_or_else(|| capslid_core::optim::AdamState::new(&[])), cfg, ck.epoch)
            } else {
                let cfg = TrainConfig {
                    batch_size: a.batch_size,
                    epochs: a.epochs,
                    learning_rate: a.learning_rate,
                    seed: cli.seed,
                    clip_norm: a.clip_norm,
                    clip_seconds: a.clip.clip_seconds,
                    stft: stft_cfg,
                    ..TrainConfig::default()
                };
                Trainer::new(cfg)?
            }
            .with_workers(workers);
            let mut stats_file = match &a.stats {
                Some(p) => Some(
                    std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(p)
                        .with_context(|| format!("opening {}", p.display()))?,
                ),
                None => None,
            };
            let mut failure = None;
            let stats = trainer.fit(&data, |s| {
                let line = emit(s).and_then(|_| match &mut stats_file {
                    Some(f) => Ok(write_stats_jsonl(&mut *f, std::slice::from_ref(s))?),
                    None => Ok(()),
                });
                if let Err(e) = line {
                    failure = Some(e);
                    return false;
                }
                true
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            let checkpoint = Checkpoint {
                step: trainer.adam.step,
                epoch: trainer.epoch,
                params: trainer.params,
                adam: Some(trainer.adam),
                config: trainer.config,
                thresholds: None,
            };
            save_checkpoint(&a.checkpoint, &checkpoint)?;
            log::info!("wrote {} after {} epochs", a.checkpoint.display(), stats.len());
            Ok(())
        }
        Command::Eval(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let split = parse_split(&a.split)?;
            if split == Split::Nonclass {
                bail!("the nonclass split has no in-set labels; use `detect` instead");
            }
            let records = read_manifest(&a.manifest)?;
            let data = load_split(&manifest_root(&a.manifest), &records, split, &ck.config.stft, ck.config.clip_seconds)?;
            let (report, curves) = evaluate(&ck.params, &data)?;
            if let Some(dir) = &a.csv_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("confusion.csv"), confusion_csv(&report))?;
                std::fs::write(dir.join("roc.csv"), roc_csv(&curves))?;
            }
            emit(&report)
        }
        Command::Predict(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let input = model_input(&ck, &a.input)?;
            let mut p = predict_all(&ck.params, std::slice::from_ref(&input))?.remove(0);
            if let Some(t) = thresholds_for(&ck, a.thresholds.as_deref())? {
                p = t.apply(p)?;
            }
            emit(&PredictionJson::from(&p))
        }
        Command::Calibrate(a) => {
            let mut ck = load_checkpoint(&a.checkpoint)?;
            let split = parse_split(&a.split)?;
            let records = read_manifest(&a.manifest)?;
            let data = load_split(&manifest_root(&a.manifest), &records, split, &ck.config.stft, ck.config.clip_seconds)?;
            let predictions = predict_all(&ck.params, &data.inputs)?;
            let table = calibrate_from_predictions(&predictions, &data.labels, ck.params.config().lang_caps)?;
            let j = ThresholdJson::from(&table);
            if let Some(out) = &a.out {
                std::fs::write(out, serde_json::to_vec(&j)?)?;
            }
            if !a.no_store {
                ck.thresholds = Some(table);
                save_checkpoint(&a.checkpoint, &ck)?;
            }
            emit(&j)
        }
        Command::Detect(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let Some(thresholds) = thresholds_for(&ck, a.thresholds.as_deref())? else {
                bail!("no thresholds: run `calibrate` first or pass --thresholds");
            };
            match (&a.input, &a.manifest) {
                (Some(wav), _) => {
                    let input = model_input(&ck, wav)?;
                    let p = detect_all(&ck.params, std::slice::from_ref(&input), &thresholds)?.remove(0);
                    emit(&PredictionJson::from(&p))
                }
                (None, Some(manifest)) => {
                    let split = parse_split(a.split.as_deref().unwrap_or("nonclass"))?;
                    let records = read_manifest(manifest)?;
                    let data = load_split(&manifest_root(manifest), &records, split, &ck.config.stft, ck.config.clip_seconds)?;
                    let preds = detect_all(&ck.params, &data.inputs, &thresholds)?;
                    let flagged = preds.iter().filter(|p| p.is_non_class).count();
                    emit(&json!({
                        "split": split.as_str(),
                        "total": preds.len(),
                        "flagged": flagged,
                        "flagged_fraction": if preds.is_empty() { 0.0 } else { flagged as f64 / preds.len() as f64 },
                    }))
                }
                (None, None) => bail!("pass --input or --manifest"),
            }
        }
        Command::Segment(a) => {
            let ck = load_checkpoint(&a.checkpoint)?;
            let signal = read_wav(&a.input)?;
            let mut preds = segment_and_classify(&ck.params, &signal, ck.config.clip_seconds, &ck.config.stft)?;
            if let Some(t) = thresholds_for(&ck, a.thresholds.as_deref())? {
                preds = preds.into_iter().map(|p| t.apply(p)).collect::<capslid_core::Result<_>>()?;
            }
            let rows: Vec<_> = preds
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    json!({
                        "index": i,
                        "start_seconds": i as u64 * u64::from(ck.config.clip_seconds),
                        "label": p.label,
                        "norms": p.norms,
                        "non_class": p.is_non_class,
                    })
                })
                .collect();
            emit(&rows)
        }
    }
}
