use super::ensure_binary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pixel confusion counts. Integer sums, so accumulation order never matters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// Counts `pred > threshold` against a binary target.
    pub fn from_slices(pred_prob: &[f32], target: &[f32], threshold: f32) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in pred_prob.iter().zip(target) {
            match (p > threshold, t > 0.5) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// `TP / (TP + FP + FN)`; 1 when prediction and target are both empty.
    pub fn iou(&self) -> f64 {
        let d = self.tp + self.fp + self.fn_;
        if d == 0 {
            1.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    /// `2TP / (2TP + FP + FN)`; 1 when prediction and target are both empty.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub iou: f64,
    pub f1: f64,
}

/// IoU and F1 of a probability map against a binary target.
pub fn iou_f1(pred_prob: &Tensor, target: &Tensor, threshold: f32) -> Result<(f64, f64)> {
    let mut acc = MetricAccumulator::new(MetricMode::SetLevel, threshold);
    acc.add(pred_prob, target)?;
    let m = acc.finish();
    Ok((m.iou, m.f1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricMode {
    /// Sum TP/FP/FN over every pixel of the set, then take the ratios.
    #[default]
    SetLevel,
    /// Compute per image, then average.
    PerImageMean,
}

impl MetricMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "set" => Ok(MetricMode::SetLevel),
            "per-image" => Ok(MetricMode::PerImageMean),
            other => Err(Error::config(
                "metric_mode",
                format!("unknown mode `{other}` (expected set or per-image)"),
            )),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricMode::SetLevel => "set",
            MetricMode::PerImageMean => "per-image",
        }
    }
}

/// Streams batches of predictions and targets into set-level counts and
/// per-image scores.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    pub mode: MetricMode,
    pub threshold: f32,
    pub total: Confusion,
    per_image: Vec<Metrics>,
}

impl MetricAccumulator {
    pub fn new(mode: MetricMode, threshold: f32) -> Self {
        MetricAccumulator {
            mode,
            threshold,
            total: Confusion::default(),
            per_image: Vec::new(),
        }
    }

    /// `pred_prob` and `target` are `[N, 1, H, W]`.
    pub fn add(&mut self, pred_prob: &Tensor, target: &Tensor) -> Result<()> {
        if pred_prob.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "iou_f1",
                lhs: pred_prob.shape(),
                rhs: target.shape(),
            });
        }
        ensure_binary("target", target)?;
        let per = pred_prob.len() / pred_prob.batch().max(1);
        for n in 0..pred_prob.batch() {
            let range = n * per..(n + 1) * per;
            let c = Confusion::from_slices(&pred_prob.data()[range.clone()], &target.data()[range], self.threshold);
            self.total.merge(&c);
            self.per_image.push(Metrics {
                iou: c.iou(),
                f1: c.f1(),
            });
        }
        Ok(())
    }

    pub fn images(&self) -> usize {
        self.per_image.len()
    }

    pub fn finish(&self) -> Metrics {
        match self.mode {
            MetricMode::SetLevel => Metrics {
                iou: self.total.iou(),
                f1: self.total.f1(),
            },
            MetricMode::PerImageMean => {
                let n = self.per_image.len().max(1) as f64;
                Metrics {
                    iou: self.per_image.iter().map(|m| m.iou).sum::<f64>() / n,
                    f1: self.per_image.iter().map(|m| m.f1).sum::<f64>() / n,
                }
            }
        }
    }
}
