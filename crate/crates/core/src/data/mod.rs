//! Datasets, the synthetic lesion generator, train/validation splits,
//! segmentation metrics and inference timing.

mod bench;
mod corpus;
mod metrics;
mod split;
mod synthetic;

pub use bench::{bench_fps, hardware_descriptor, BenchReport};
pub use corpus::{load_corpus, write_corpus, write_image_png, write_mask_png, CorpusOptions};
pub use metrics::{iou_f1, Confusion, MetricAccumulator, MetricMode, Metrics};
pub use split::{split, SplitAssignment, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One image with its binary lesion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSample {
    pub id: String,
    /// `[1, in_channels, H, W]`, values in `[0, 1]`.
    pub image: Tensor,
    /// `[1, 1, H, W]`, values in `{0, 1}`.
    pub mask: Tensor,
}

impl SegmentationSample {
    pub fn new(id: impl Into<String>, image: Tensor, mask: Tensor) -> Result<Self> {
        let s = SegmentationSample {
            id: id.into(),
            image,
            mask,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (i, m) = (self.image.shape(), self.mask.shape());
        if i[0] != 1 || m[0] != 1 || m[1] != 1 || i[2..] != m[2..] {
            return Err(Error::ShapeMismatch {
                op: "SegmentationSample",
                lhs: i,
                rhs: m,
            });
        }
        ensure_binary("mask", &self.mask)
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.mask.data().iter().map(|&v| v as f64).sum::<f64>() / self.mask.len().max(1) as f64
    }
}

pub(crate) fn ensure_binary(what: &str, t: &Tensor) -> Result<()> {
    if let Some((i, v)) = t.data().iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::Validation(format!(
            "{what} must be binary, found {v} at flat index {i}"
        )));
    }
    Ok(())
}

/// Stacks samples into an image batch and a mask batch.
pub fn collate(samples: &[&SegmentationSample]) -> Result<(Tensor, Tensor)> {
    let images: Vec<&Tensor> = samples.iter().map(|s| &s.image).collect();
    let masks: Vec<&Tensor> = samples.iter().map(|s| &s.mask).collect();
    Ok((Tensor::stack(&images)?, Tensor::stack(&masks)?))
}
