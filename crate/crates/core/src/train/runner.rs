use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{augment, bce_dice_loss, OptimizerState, ScheduleState};
use crate::data::{collate, Confusion, MetricAccumulator, MetricMode, Metrics, SegmentationSample};
use crate::error::{Error, Result};
use crate::layers::{Mode, Module};
use crate::model::Model;
use crate::tensor::{sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f32,
    pub weight_decay: f32,
    pub power: f64,
    pub seed: u64,
    pub augment: bool,
    pub metric_mode: MetricMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 8,
            lr: 0.01,
            momentum: OptimizerState::DEFAULT_MOMENTUM,
            weight_decay: OptimizerState::DEFAULT_WEIGHT_DECAY,
            power: ScheduleState::DEFAULT_POWER,
            seed: 0,
            augment: true,
            metric_mode: MetricMode::SetLevel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("lr", "must be a non-negative number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_iou: f64,
    pub val_f1: f64,
    /// Learning rate of the last step taken in this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRunRecord {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
}

impl TrainRunRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_iou,val_f1,lr";

    /// The per-epoch log. Wall-clock time is left out so that runs with the
    /// same seed produce identical files.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.val_iou, e.val_f1, e.lr
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub loss: f64,
    pub metrics: Metrics,
    pub confusion: Confusion,
    pub images: usize,
}

/// Eval-mode foreground probabilities, one `[1, 1, H, W]` tensor per sample.
pub fn predict(model: &mut Model, samples: &[SegmentationSample], batch_size: usize) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SegmentationSample> = chunk.iter().collect();
        let (x, _) = collate(&refs)?;
        let probs = sigmoid(&model.forward(&x, Mode::Eval)?);
        out.extend((0..chunk.len()).map(|n| probs.batch_item(n)));
    }
    Ok(out)
}

/// Mean loss and IoU/F1 over `samples` in eval mode.
pub fn evaluate(
    model: &mut Model,
    samples: &[SegmentationSample],
    batch_size: usize,
    mode: MetricMode,
) -> Result<EvalSummary> {
    if samples.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty set".into()));
    }
    let mut acc = MetricAccumulator::new(mode, 0.5);
    let mut loss_sum = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SegmentationSample> = chunk.iter().collect();
        let (x, y) = collate(&refs)?;
        let logits = model.forward(&x, Mode::Eval)?;
        loss_sum += bce_dice_loss(&logits, &y)?.total * chunk.len() as f64;
        acc.add(&sigmoid(&logits), &y)?;
    }
    Ok(EvalSummary {
        loss: loss_sum / samples.len() as f64,
        metrics: acc.finish(),
        confusion: acc.total,
        images: samples.len(),
    })
}

/// Trains `model` in place. See [`train_with`].
pub fn train(
    model: &mut Model,
    train_set: &[SegmentationSample],
    val_set: &[SegmentationSample],
    cfg: &TrainConfig,
) -> Result<TrainRunRecord> {
    train_with(model, train_set, val_set, cfg, |_| {})
}

/// Mini-batch SGD with a per-iteration poly schedule. Each epoch shuffles the
/// training set (the last short batch is kept), optionally augments every
/// sample, and finishes with an eval-mode pass over `val_set`. An empty
/// `val_set` leaves the validation columns NaN. `on_epoch` sees each record
/// as soon as it is complete.
pub fn train_with(
    model: &mut Model,
    train_set: &[SegmentationSample],
    val_set: &[SegmentationSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainRunRecord> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        model.check_input(s.image.shape())?;
    }
    let start = Instant::now();
    let n = train_set.len();
    let batches = n.div_ceil(cfg.batch_size);
    let mut schedule = ScheduleState::new(cfg.lr, cfg.epochs * batches)?;
    schedule.power = cfg.power;
    let mut opt = OptimizerState::with(cfg.lr as f32, cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = schedule.lr();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<SegmentationSample> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        augment(&train_set[i], &mut rng)
                    } else {
                        train_set[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&SegmentationSample> = batch.iter().collect();
            let (x, y) = collate(&refs)?;
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train)?;
            let loss = bce_dice_loss(&logits, &y)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite { layer: "loss".into() });
            }
            model.backward(&loss.grad)?;
            lr = schedule.lr();
            opt.lr = lr as f32;
            opt.step(model)?;
            schedule.advance();
            loss_sum += loss.total * chunk.len() as f64;
        }
        let (val_loss, val_iou, val_f1) = if val_set.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let e = evaluate(model, val_set, cfg.batch_size, cfg.metric_mode)?;
            (e.loss, e.metrics.iou, e.metrics.f1)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_loss,
            val_iou,
            val_f1,
            lr,
        };
        on_epoch(&record);
        epochs.push(record);
    }
    Ok(TrainRunRecord {
        seed: cfg.seed,
        epochs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
