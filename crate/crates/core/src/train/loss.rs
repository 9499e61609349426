use crate::data::ensure_binary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dice smoothing constant.
const SMOOTH: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct LossValue {
    pub total: f64,
    pub bce: f64,
    pub dice: f64,
    /// `d total / d logits`.
    pub grad: Tensor,
}

/// `0.5·BCE + Dice` on logits.
///
/// BCE is the mean over all pixels of `max(x,0) − x·y + ln(1 + e^{−|x|})`.
/// Dice is `1 − (2Σpy + 1)/(Σp + Σy + 1)` with `p = sigmoid(x)` and sums
/// over the whole batch.
pub fn bce_dice_loss(logits: &Tensor, target: &Tensor) -> Result<LossValue> {
    if logits.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "bce_dice_loss",
            lhs: logits.shape(),
            rhs: target.shape(),
        });
    }
    ensure_binary("target", target)?;
    let x = logits.data();
    let y = target.data();
    let m = x.len().max(1) as f64;
    let p: Vec<f64> = x.iter().map(|&v| sigmoid(v as f64)).collect();

    let mut bce = 0.0;
    let (mut inter, mut sum_p, mut sum_y) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (xi, yi) = (x[i] as f64, y[i] as f64);
        bce += xi.max(0.0) - xi * yi + (-xi.abs()).exp().ln_1p();
        inter += p[i] * yi;
        sum_p += p[i];
        sum_y += yi;
    }
    bce /= m;
    let num = 2.0 * inter + SMOOTH;
    let den = sum_p + sum_y + SMOOTH;
    let dice = 1.0 - num / den;

    let grad: Vec<f32> = (0..x.len())
        .map(|i| {
            let yi = y[i] as f64;
            let d_bce = (p[i] - yi) / m;
            let d_dice_dp = -(2.0 * yi * den - num) / (den * den);
            (0.5 * d_bce + d_dice_dp * p[i] * (1.0 - p[i])) as f32
        })
        .collect();
    Ok(LossValue {
        total: 0.5 * bce + dice,
        bce,
        dice,
        grad: Tensor::from_vec(logits.shape(), grad)?,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
