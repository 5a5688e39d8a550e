//! Mini-batch Adam training with deterministic shuffling and reduction.

use std::io::Write;

use capslid_core::capsnet::{loss_and_gradients, CapsNetConfig, MarginLossConfig, ModelParams};
use capslid_core::dsp::StftConfig;
use capslid_core::optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
use capslid_core::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{CapslidError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Gradients are rescaled to at most this global norm before each step.
    pub clip_norm: f64,
    pub model: CapsNetConfig,
    pub loss: MarginLossConfig,
    /// Clip length the model was trained on (5 or 10 s).
    #[serde(default = "default_clip_seconds")]
    pub clip_seconds: u32,
    #[serde(default)]
    pub stft: StftConfig,
}

fn default_clip_seconds() -> u32 {
    5
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 32,
            epochs: 10,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
            clip_norm: 5.0,
            model: CapsNetConfig::default(),
            loss: MarginLossConfig::default(),
            clip_seconds: default_clip_seconds(),
            stft: StftConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        self.model.validate()?;
        self.loss.validate()?;
        self.stft.validate(capslid_core::dsp::CORPUS_SAMPLE_RATE)?;
        if !matches!(self.clip_seconds, 5 | 10) {
            return Err(capslid_core::Error::InvalidConfig(format!(
                "clip length must be 5 or 10 s, got {}",
                self.clip_seconds
            ))
            .into());
        }
        if self.batch_size == 0 || self.epochs == 0 || !(self.clip_norm > 0.0) {
            return Err(capslid_core::Error::InvalidConfig(format!(
                "batch size {}, epochs {} and clip norm {} must all be positive",
                self.batch_size, self.epochs, self.clip_norm
            ))
            .into());
        }
        Ok(())
    }
}

/// Per-epoch summary. `train_acc` counts each example as classified by the
/// parameters in effect when its batch was processed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_acc: f64,
}

pub struct Trainer {
    pub params: ModelParams,
    pub adam: AdamState,
    pub config: TrainConfig,
    /// Epochs completed so far.
    pub epoch: usize,
    workers: usize,
}

struct ExampleResult {
    loss: f64,
    correct: bool,
    grads: Vec<Tensor>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(config.model, config.seed)?;
        Ok(Self::resume(params, AdamState::new(&[]), config, 0))
    }

    /// Continues from existing parameters and optimizer state. An empty
    /// optimizer state is replaced by fresh zero moments.
    pub fn resume(params: ModelParams, adam: AdamState, config: TrainConfig, epoch: usize) -> Self {
        let adam = if adam.first.is_empty() { AdamState::new(params.tensors()) } else { adam };
        Self { params, adam, config, epoch, workers: rayon::current_num_threads() }
    }

    /// Maximum number of examples evaluated concurrently. Results do not
    /// depend on it.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    fn example(&self, data: &Dataset, index: usize) -> Result<ExampleResult> {
        let input = data.inputs[index].to_tensor();
        let (loss, grads) = loss_and_gradients(&self.params, &input, data.labels[index], &self.config.loss)?;
        Ok(ExampleResult { loss: loss.total, correct: loss.predicted() == data.labels[index], grads })
    }

    /// Visiting order of epoch `epoch` (0-based): a seeded permutation.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn run_epoch(&mut self, data: &Dataset) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(capslid_core::Error::EmptyDataset.into());
        }
        if let Some(&label) = data.labels.iter().find(|&&l| l >= self.config.model.lang_caps) {
            return Err(capslid_core::Error::LabelOutOfRange { label, classes: self.config.model.lang_caps }.into());
        }
        let order = self.epoch_order(data.len(), self.epoch);
        let adam_cfg = self.config.adam();
        let (mut loss_sum, mut correct) = (0.0, 0usize);

        for batch in order.chunks(self.config.batch_size) {
            let mut acc: Option<Vec<Tensor>> = None;
            for chunk in batch.chunks(self.workers) {
                let results: Vec<Result<ExampleResult>> = chunk.par_iter().map(|&i| self.example(data, i)).collect();
                for (&i, r) in chunk.iter().zip(results) {
                    let r = r?;
                    if !r.loss.is_finite() || !r.grads.iter().all(Tensor::is_finite) {
                        return Err(CapslidError::NonFiniteLoss {
                            epoch: self.epoch + 1,
                            step: self.adam.step + 1,
                            example: i,
                            detail: format!("loss {}", r.loss),
                        });
                    }
                    loss_sum += r.loss;
                    correct += usize::from(r.correct);
                    match &mut acc {
                        None => acc = Some(r.grads),
                        Some(sum) => {
                            for (s, g) in sum.iter_mut().zip(&r.grads) {
                                s.axpy(1.0, g)?;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("batch is nonempty");
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            clip_global_norm(&mut grads, self.config.clip_norm);
            adam_step(self.params.tensors_mut(), &grads, &mut self.adam, &adam_cfg)?;
        }
        self.epoch += 1;
        let stats = EpochStats {
            epoch: self.epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
        };
        log::info!("epoch {} mean loss {:.5} train acc {:.4}", stats.epoch, stats.mean_loss, stats.train_acc);
        Ok(stats)
    }

    /// Runs until `config.epochs` epochs are complete, or until `keep_going`
    /// returns false after an epoch.
    pub fn fit(&mut self, data: &Dataset, mut keep_going: impl FnMut(&EpochStats) -> bool) -> Result<Vec<EpochStats>> {
        let mut all = Vec::new();
        while self.epoch < self.config.epochs {
            let stats = self.run_epoch(data)?;
            let go = keep_going(&stats);
            all.push(stats);
            if !go {
                break;
            }
        }
        Ok(all)
    }
}

/// Trains from a fresh seeded initialization for `config.epochs` epochs.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(ModelParams, Vec<EpochStats>)> {
    let mut trainer = Trainer::new(config.clone())?;
    let stats = trainer.fit(data, |_| true)?;
    Ok((trainer.params, stats))
}

pub fn write_stats_jsonl(mut out: impl Write, stats: &[EpochStats]) -> Result<()> {
    for s in stats {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(crate::error::io_err("<stats>"))?;
    }
    Ok(())
}
