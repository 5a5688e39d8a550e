//! Synthetic corpus on disk: WAV files plus a JSON Lines manifest.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use capslid_core::datagen::{generate_clip, ClassSignature, NUM_PRESETS};
use capslid_core::dsp::{encode_wav, ModelInput, StftConfig, CORPUS_SAMPLE_RATE};
use capslid_core::NUM_LANGUAGES;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CapslidError, Result};
use crate::pipeline::{read_wav_at, signal_to_input};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Calib,
    Nonclass,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Test, Split::Calib, Split::Nonclass];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Calib => "calib",
            Split::Nonclass => "nonclass",
        }
    }

    fn seed_block(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
            Split::Calib => 2,
            Split::Nonclass => 3,
        }
    }
}

/// One manifest line. Out-of-set clips carry labels `≥` the number of
/// in-set classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: String,
    pub label: usize,
    pub split: Split,
    pub duration: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub in_set_classes: usize,
    pub nonclass_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub calib_per_class: usize,
    pub nonclass_per_class: usize,
    pub duration_seconds: f64,
    pub base_seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            in_set_classes: NUM_LANGUAGES,
            nonclass_classes: 1,
            train_per_class: 200,
            test_per_class: 50,
            calib_per_class: 50,
            nonclass_per_class: 50,
            duration_seconds: 5.0,
            base_seed: 0,
        }
    }
}

/// Seeds of one (split, class) pair occupy their own block of this size.
const SEED_STRIDE: u64 = 100_000;

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(capslid_core::Error::InvalidConfig(m).into());
        if self.in_set_classes == 0 || self.in_set_classes + self.nonclass_classes > NUM_PRESETS {
            return bad(format!(
                "need 1..={NUM_PRESETS} signatures in total, got {} in-set + {} held out",
                self.in_set_classes, self.nonclass_classes
            ));
        }
        let counts = [self.train_per_class, self.test_per_class, self.calib_per_class, self.nonclass_per_class];
        if counts.iter().any(|&c| c as u64 >= SEED_STRIDE) {
            return bad(format!("at most {} clips per class and split", SEED_STRIDE - 1));
        }
        if !(self.duration_seconds >= capslid_core::datagen::MIN_DURATION_SECONDS) {
            return bad(format!("clip duration {} s is too short", self.duration_seconds));
        }
        Ok(())
    }

    /// Seed of clip `index` of `class` in `split`; distinct (split, class)
    /// pairs use disjoint ranges.
    pub fn seed(&self, split: Split, class: usize, index: usize) -> u64 {
        let block = split.seed_block() * NUM_PRESETS as u64 + class as u64;
        self.base_seed
            .wrapping_mul(SEED_STRIDE * 4 * NUM_PRESETS as u64)
            .wrapping_add(block * SEED_STRIDE + index as u64)
    }

    /// Every record the corpus will contain, in manifest order.
    pub fn records(&self) -> Vec<ManifestRecord> {
        let mut out = Vec::new();
        let mut push = |split: Split, class: usize, count: usize| {
            for i in 0..count {
                out.push(ManifestRecord {
                    path: format!("{}/c{class}_{i:05}.wav", split.as_str()),
                    label: class,
                    split,
                    duration: self.duration_seconds,
                    seed: self.seed(split, class, i),
                });
            }
        };
        for (split, count) in [
            (Split::Train, self.train_per_class),
            (Split::Test, self.test_per_class),
            (Split::Calib, self.calib_per_class),
        ] {
            for class in 0..self.in_set_classes {
                push(split, class, count);
            }
        }
        for k in 0..self.nonclass_classes {
            push(Split::Nonclass, self.in_set_classes + k, self.nonclass_per_class);
        }
        out
    }
}

/// Renders the clip a record describes.
pub fn render_record(record: &ManifestRecord) -> Result<capslid_core::dsp::PcmSignal> {
    let signature = ClassSignature::preset(record.label)?;
    Ok(generate_clip(&signature, record.duration, record.seed)?)
}

/// Writes every WAV file and the manifest under `out_dir`.
pub fn build_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<Vec<ManifestRecord>> {
    spec.validate()?;
    let records = spec.records();
    for split in Split::ALL {
        let dir = out_dir.join(split.as_str());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    records.par_iter().try_for_each(|r| -> Result<()> {
        let bytes = encode_wav(&render_record(r)?);
        let path = out_dir.join(&r.path);
        fs::write(&path, bytes).map_err(io_err(path))
    })?;
    write_manifest(&out_dir.join(MANIFEST_FILE), &records)?;
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| CapslidError::Manifest {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Model inputs with their labels.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub inputs: Vec<ModelInput>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn pairs(&self) -> Vec<(ModelInput, usize)> {
        self.inputs.iter().cloned().zip(self.labels.iter().copied()).collect()
    }
}

/// Loads the records of one split from disk (paths relative to `root`).
/// Files must be at the corpus sample rate.
pub fn load_split(root: &Path, records: &[ManifestRecord], split: Split, stft: &StftConfig, clip_seconds: u32) -> Result<Dataset> {
    let chosen: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == split).collect();
    let inputs = chosen
        .par_iter()
        .map(|r| {
            let signal = read_wav_at(&root.join(&r.path), CORPUS_SAMPLE_RATE)?;
            signal_to_input(&signal, clip_seconds, stft)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { inputs, labels: chosen.iter().map(|r| r.label).collect() })
}

/// Renders the records of one split in memory, skipping the WAV files.
/// Produces the same inputs as [`load_split`] on a built corpus.
pub fn render_split(records: &[ManifestRecord], split: Split, stft: &StftConfig, clip_seconds: u32) -> Result<Dataset> {
    let chosen: Vec<&ManifestRecord> = records.iter().filter(|r| r.split == split).collect();
    let inputs = chosen
        .par_iter()
        .map(|r| {
            // round-trip through 16-bit PCM so results match files on disk
            let wav = encode_wav(&render_record(r)?);
            let signal = capslid_core::dsp::decode_wav(&wav)?;
            signal_to_input(&signal, clip_seconds, stft)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { inputs, labels: chosen.iter().map(|r| r.label).collect() })
}

/// Directory holding the manifest, used to resolve record paths.
pub fn manifest_root(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}
