//! 2× bilinear upsampling with half-pixel centers: output coordinate `o`
//! samples input coordinate `(o + 0.5) / 2 - 0.5`, clamped to the valid
//! range at the borders.

use super::Tensor;
use crate::error::{Error, Result};

/// Source taps `(i0, i1, weight of i1)` for each output position along an axis.
fn taps(size: usize) -> Vec<(usize, usize, f32)> {
    (0..2 * size)
        .map(|o| {
            let src = ((o as f32 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(size - 1);
            let i1 = (i0 + 1).min(size - 1);
            (i0, i1, src - i0 as f32)
        })
        .collect()
}

pub fn bilinear_upsample2x(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    if input.is_empty() {
        return out;
    }
    let (ty, tx) = (taps(h), taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    let src = input.data();
    let dst = out.data_mut();
    let mut row0 = vec![0.0f32; ow];
    let mut row1 = vec![0.0f32; ow];
    for p in 0..n * c {
        let plane = &src[p * h * w..][..h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            horizontal(&plane[y0 * w..][..w], &tx, &mut row0);
            horizontal(&plane[y1 * w..][..w], &tx, &mut row1);
            let out_row = &mut dst[(p * oh + oy) * ow..][..ow];
            for ((o, &a), &b) in out_row.iter_mut().zip(&row0).zip(&row1) {
                *o = a * (1.0 - fy) + b * fy;
            }
        }
    }
    out
}

fn horizontal(row: &[f32], tx: &[(usize, usize, f32)], out: &mut [f32]) {
    for (o, &(x0, x1, fx)) in out.iter_mut().zip(tx) {
        *o = row[x0] * (1.0 - fx) + row[x1] * fx;
    }
}

/// Transpose of the (linear) upsampling map.
pub fn bilinear_upsample2x_backward(grad_out: &Tensor, input_shape: [usize; 4]) -> Result<Tensor> {
    let [n, c, h, w] = input_shape;
    if grad_out.shape() != [n, c, 2 * h, 2 * w] {
        return Err(Error::ShapeMismatch {
            op: "bilinear_upsample2x_backward",
            lhs: [n, c, 2 * h, 2 * w],
            rhs: grad_out.shape(),
        });
    }
    let mut gin = Tensor::zeros(input_shape);
    if gin.is_empty() {
        return Ok(gin);
    }
    let (ty, tx) = (taps(h), taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    let gout = grad_out.data();
    let g = gin.data_mut();
    for p in 0..n * c {
        let plane = &mut g[p * h * w..][..h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let row = &gout[(p * oh + oy) * ow..][..ow];
            for (&gv, &(x0, x1, fx)) in row.iter().zip(&tx) {
                let top = gv * (1.0 - fy);
                let bottom = gv * fy;
                plane[y0 * w + x0] += top * (1.0 - fx);
                plane[y0 * w + x1] += top * fx;
                plane[y1 * w + x0] += bottom * (1.0 - fx);
                plane[y1 * w + x1] += bottom * fx;
            }
        }
    }
    Ok(gin)
}
