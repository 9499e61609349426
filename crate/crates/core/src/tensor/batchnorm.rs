use super::Tensor;
use crate::error::{Error, Result};

/// Whether normalization uses batch statistics or the running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel affine parameters and running statistics of a BatchNorm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    pub momentum: f32,
    pub mode: BnMode,
}

impl BatchNormState {
    pub const DEFAULT_EPS: f32 = 1e-5;
    pub const DEFAULT_MOMENTUM: f32 = 0.1;

    /// `gamma = 1`, `beta = 0`, running mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
            mode: BnMode::Train,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor) -> Result<()> {
        let c = self.channels();
        if [self.beta.len(), self.running_mean.len(), self.running_var.len()]
            .iter()
            .any(|&l| l != c)
        {
            return Err(Error::State("batchnorm state vectors disagree in length".into()));
        }
        if input.channels() != c {
            return Err(Error::Dimension {
                op: "batchnorm2d",
                axis: "channel",
                expected: c.to_string(),
                actual: input.channels(),
            });
        }
        Ok(())
    }
}

/// Normalizes per channel over `(N, H, W)`.
///
/// Returns the output and the statistics that [`batchnorm2d_backward`]
/// needs. In train mode the running estimates move towards the batch
/// statistics by `momentum`; normalization and running estimate both use the
/// population (biased) variance.
pub fn batchnorm2d(input: &Tensor, state: &mut BatchNormState) -> Result<(Tensor, BnStats)> {
    state.check(input)?;
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let count = n * plane;
    let (mean, var) = match state.mode {
        BnMode::Train => {
            if count <= 1 {
                return Err(Error::Validation(format!(
                    "batchnorm2d in train mode needs more than one value per channel \
                     (N·H·W = {count}); use eval mode or a larger batch"
                )));
            }
            let (mean, var) = batch_stats(input);
            let m = state.momentum;
            for ci in 0..c {
                state.running_mean[ci] = (1.0 - m) * state.running_mean[ci] + m * mean[ci];
                state.running_var[ci] = (1.0 - m) * state.running_var[ci] + m * var[ci];
            }
            (mean, var)
        }
        BnMode::Eval => (state.running_mean.clone(), state.running_var.clone()),
    };
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
    let mut out = Tensor::zeros(input.shape());
    let src = input.data();
    let dst = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let scale = state.gamma[ci] * inv_std[ci];
            let shift = state.beta[ci] - mean[ci] * scale;
            let base = (ni * c + ci) * plane;
            for (o, &x) in dst[base..base + plane].iter_mut().zip(&src[base..base + plane]) {
                *o = x * scale + shift;
            }
        }
    }
    Ok((out, BnStats { mean, inv_std }))
}

/// Mean and `1/sqrt(var + eps)` per channel, as used by one forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

/// Per-channel mean and population variance, accumulated in f64.
fn batch_stats(input: &Tensor) -> (Vec<f32>, Vec<f32>) {
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let count = (n * plane) as f64;
    let src = input.data();
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ci in 0..c {
        let mut sum = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            sum += src[base..base + plane].iter().map(|&x| x as f64).sum::<f64>();
        }
        let mu = sum / count;
        let mut sq = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            sq += src[base..base + plane]
                .iter()
                .map(|&x| {
                    let d = x as f64 - mu;
                    d * d
                })
                .sum::<f64>();
        }
        mean[ci] = mu as f32;
        var[ci] = (sq / count) as f32;
    }
    (mean, var)
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

/// Backward pass. `mode` and `stats` must come from the matching forward call.
pub fn batchnorm2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    gamma: &[f32],
    stats: &BnStats,
    mode: BnMode,
) -> Result<BatchNormGrads> {
    if grad_out.shape() != input.shape() {
        return Err(Error::ShapeMismatch {
            op: "batchnorm2d_backward",
            lhs: input.shape(),
            rhs: grad_out.shape(),
        });
    }
    let [n, c, h, w] = input.shape();
    if gamma.len() != c || stats.inv_std.len() != c || stats.mean.len() != c {
        return Err(Error::Dimension {
            op: "batchnorm2d_backward",
            axis: "channel",
            expected: c.to_string(),
            actual: gamma.len(),
        });
    }
    let plane = h * w;
    let count = (n * plane) as f64;
    let (mean, inv_std) = (&stats.mean, &stats.inv_std);
    let x = input.data();
    let gy = grad_out.data();
    let mut gx = Tensor::zeros(input.shape());
    let mut ggamma = vec![0.0f32; c];
    let mut gbeta = vec![0.0f32; c];
    let gxd = gx.data_mut();
    for ci in 0..c {
        let (mu, is) = (mean[ci] as f64, inv_std[ci] as f64);
        let mut sum_gy = 0.0f64;
        let mut sum_gy_xhat = 0.0f64;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                let xhat = (x[i] as f64 - mu) * is;
                sum_gy += gy[i] as f64;
                sum_gy_xhat += gy[i] as f64 * xhat;
            }
        }
        ggamma[ci] = sum_gy_xhat as f32;
        gbeta[ci] = sum_gy as f32;
        let g = gamma[ci] as f64 * is;
        for ni in 0..n {
            let base = (ni * c + ci) * plane;
            for i in base..base + plane {
                gxd[i] = match mode {
                    BnMode::Eval => (g * gy[i] as f64) as f32,
                    BnMode::Train => {
                        let xhat = (x[i] as f64 - mu) * is;
                        (g * (gy[i] as f64 - sum_gy / count - xhat * sum_gy_xhat / count)) as f32
                    }
                };
            }
        }
    }
    Ok(BatchNormGrads {
        input: gx,
        gamma: ggamma,
        beta: gbeta,
    })
}
