//! Two-phase training: pretrain on healthy eyes, finetune on cataract eyes.
//!
//! Loss is per-pixel binary cross-entropy on the logistic output, averaged
//! over pixels and batch. The optimizer is momentum SGD
//! (`v ← μ·v − lr·g`, `θ ← θ + v`) with no schedule or weight decay.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use segdense_nn::{sigmoid, Tensor};

use crate::data::{Sample, SegmentationMask};
use crate::error::{Result, SegError};
use crate::model::{load_checkpoint, save_checkpoint, ConfidenceMap, IrisSegmenter};

/// Probability clamp for the loss.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainPhase {
    Pretrain,
    Finetune,
}

impl TrainPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainPhase::Pretrain => "pretrain",
            TrainPhase::Finetune => "finetune",
        }
    }
}

impl fmt::Display for TrainPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainPhase {
    type Err = SegError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(TrainPhase::Pretrain),
            "finetune" => Ok(TrainPhase::Finetune),
            other => Err(SegError::Invalid(format!("unknown training phase `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs for this phase alone.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub phase: TrainPhase,
    /// Intermediate checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_interval: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            epochs: 500,
            batch_size: 8,
            seed: 0,
            phase: TrainPhase::Pretrain,
            checkpoint_interval: 0,
            init_checkpoint: None,
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted so a null update can be requested explicitly.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(SegError::Config(format!(
                "learning_rate must be ≥ 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SegError::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(SegError::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(SegError::Config("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub samples: usize,
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(LOSS_EPS, 1.0 - LOSS_EPS)
}

fn bce(p: f64, t: f64) -> f64 {
    let p = clamp_p(p);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// Mean binary cross-entropy between confidences and binary targets.
pub fn pixel_loss(confidence: &[ConfidenceMap], target: &[SegmentationMask]) -> Result<f64> {
    if confidence.len() != target.len() || confidence.is_empty() {
        return Err(SegError::Shape(format!(
            "{} confidence maps for {} targets",
            confidence.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (c, t) in confidence.iter().zip(target) {
        if c.dims() != t.dims() {
            return Err(SegError::Shape(format!(
                "confidence {:?} vs target {:?}",
                c.dims(),
                t.dims()
            )));
        }
        for (&p, &m) in c.values().iter().zip(t.pixels()) {
            total += bce(p, m as f64);
        }
        count += t.pixels().len();
    }
    Ok(total / count as f64)
}

/// Stacks masks into a `[N, 1, H, W]` tensor of 0/1 values.
pub fn target_tensor(masks: &[&SegmentationMask]) -> Result<Tensor> {
    let first = masks
        .first()
        .ok_or_else(|| SegError::Invalid("empty target batch".into()))?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(masks.len() * w * h);
    for m in masks {
        if m.dims() != (w, h) {
            return Err(SegError::Shape(format!(
                "batch mixes {:?} and {:?} masks",
                (w, h),
                m.dims()
            )));
        }
        data.extend(m.pixels().iter().map(|&v| v as f64));
    }
    Ok(Tensor::from_vec(&[masks.len(), 1, h, w], data)?)
}

/// Loss on logits and its gradient with respect to them. Clamped pixels
/// get zero gradient.
pub fn loss_and_grad(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() {
        return Err(SegError::Shape(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let m = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for ((g, &z), &t) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets.data()) {
        let p = sigmoid(z);
        loss += bce(p, t);
        if (LOSS_EPS..=1.0 - LOSS_EPS).contains(&p) {
            *g = (p - t) / m;
        }
    }
    Ok((loss / m, grad))
}

/// Momentum SGD with one velocity buffer per parameter.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Applies the accumulated gradients.
    pub fn step(&mut self, model: &mut IrisSegmenter) {
        let (lr, mu) = (self.learning_rate, self.momentum);
        let velocity = &mut self.velocity;
        let mut i = 0;
        model.visit_params(&mut |_, p| {
            if velocity.len() == i {
                velocity.push(Tensor::zeros(p.value.shape()));
            }
            let v = &mut velocity[i];
            for ((v, th), g) in v.data_mut().iter_mut().zip(p.value.data_mut()).zip(p.grad.data()) {
                *v = mu * *v - lr * g;
                *th += *v;
            }
            i += 1;
        });
    }
}

/// Batches of sample indices for one epoch, shuffled by `(seed, epoch)`.
pub fn batch_order(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// One forward/backward pass over a batch; gradients are left in the model.
pub fn batch_gradient(model: &mut IrisSegmenter, batch: &[&Sample]) -> Result<f64> {
    let mut masks = Vec::with_capacity(batch.len());
    for s in batch {
        let mask = s
            .mask
            .as_ref()
            .ok_or_else(|| SegError::Invalid(format!("sample {} has no mask", s.id)))?;
        masks.push(mask);
    }
    let images: Vec<_> = batch.iter().map(|s| &s.image).collect();
    let x = model.spec().preprocess.batch(&images)?;
    let t = target_tensor(&masks)?;
    model.zero_grad();
    let logits = model.forward_train(&x)?;
    let (loss, grad) = loss_and_grad(&logits, &t)?;
    model.backward(&grad);
    Ok(loss)
}

/// One pass over `samples` in the order given by [`batch_order`].
pub fn train_epoch(
    model: &mut IrisSegmenter,
    optimizer: &mut Sgd,
    samples: &[Sample],
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if let Some(s) = samples.iter().find(|s| s.mask.is_none()) {
        return Err(SegError::Invalid(format!("sample {} has no mask", s.id)));
    }
    if samples.is_empty() {
        return Err(SegError::Invalid("no training samples".into()));
    }
    let mut weighted = 0.0;
    for batch in batch_order(samples.len(), config.batch_size, config.seed, epoch) {
        let refs: Vec<&Sample> = batch.iter().map(|&i| &samples[i]).collect();
        let loss = batch_gradient(model, &refs)?;
        optimizer.step(model);
        weighted += loss * refs.len() as f64;
    }
    Ok(EpochStats {
        epoch,
        mean_loss: weighted / samples.len() as f64,
        samples: samples.len(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub history: Vec<EpochStats>,
    pub log: PathBuf,
}

pub fn log_path(dir: &Path, phase: TrainPhase) -> PathBuf {
    dir.join(format!("{phase}_log.tsv"))
}

pub fn final_checkpoint_path(dir: &Path, phase: TrainPhase) -> PathBuf {
    dir.join(format!("{phase}_final.safetensors"))
}

/// Runs `config.epochs` epochs. Finetuning replaces `model` with the state
/// from `config.init_checkpoint`; pretraining does so only when one is given.
/// Writes `{phase}_log.tsv`, optional `{phase}_epochNNNN.safetensors` and
/// `{phase}_final.safetensors` into `checkpoint_dir`.
pub fn run_training(
    model: &mut IrisSegmenter,
    dataset: &[Sample],
    config: &TrainConfig,
    checkpoint_dir: &Path,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(SegError::Invalid("training dataset is empty".into()));
    }
    match (&config.init_checkpoint, config.phase) {
        (Some(path), _) => *model = load_checkpoint(path)?,
        (None, TrainPhase::Finetune) => {
            return Err(SegError::Invalid(
                "finetune phase requires an initial checkpoint (--init-checkpoint)".into(),
            ))
        }
        (None, TrainPhase::Pretrain) => {}
    }
    std::fs::create_dir_all(checkpoint_dir).map_err(|e| SegError::io(checkpoint_dir, e))?;
    let log = log_path(checkpoint_dir, config.phase);
    let mut log_file = std::fs::File::create(&log).map_err(|e| SegError::io(&log, e))?;
    writeln!(log_file, "epoch\tmean_loss\tsamples").map_err(|e| SegError::io(&log, e))?;

    let mut optimizer = Sgd::new(config.learning_rate, config.momentum);
    let mut history = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::new();
    for epoch in 1..=config.epochs {
        let stats = train_epoch(model, &mut optimizer, dataset, config, epoch)?;
        writeln!(log_file, "{}\t{:.10}\t{}", stats.epoch, stats.mean_loss, stats.samples)
            .map_err(|e| SegError::io(&log, e))?;
        on_epoch(&stats);
        history.push(stats);
        if config.checkpoint_interval > 0 && epoch % config.checkpoint_interval == 0 && epoch != config.epochs {
            let path = checkpoint_dir.join(format!("{}_epoch{epoch:04}.safetensors", config.phase));
            save_checkpoint(model, &path)?;
            checkpoints.push(path);
        }
    }
    let final_checkpoint = final_checkpoint_path(checkpoint_dir, config.phase);
    save_checkpoint(model, &final_checkpoint)?;
    checkpoints.push(final_checkpoint.clone());
    Ok(TrainOutcome {
        final_checkpoint,
        checkpoints,
        history,
        log,
    })
}
