use super::Tensor;
use crate::error::{Error, Result};

/// Flat input index of the window maximum for every output cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPoolIndices(pub Vec<usize>);

/// 2×2 max pooling with stride 2. Ties resolve to the first element in
/// row-major window order.
pub fn maxpool2x2(input: &Tensor) -> Result<(Tensor, MaxPoolIndices)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 {
        return Err(Error::Dimension {
            op: "maxpool2x2",
            axis: "height",
            expected: "an even size".into(),
            actual: h,
        });
    }
    if w % 2 != 0 {
        return Err(Error::Dimension {
            op: "maxpool2x2",
            axis: "width",
            expected: "an even size".into(),
            actual: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    let src = input.data();
    let dst = out.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[o] = src[best];
                idx.push(best);
                o += 1;
            }
        }
    }
    Ok((out, MaxPoolIndices(idx)))
}

/// Routes each output gradient to its window's argmax.
pub fn maxpool2x2_backward(grad_out: &Tensor, indices: &MaxPoolIndices, input_shape: [usize; 4]) -> Result<Tensor> {
    if grad_out.len() != indices.0.len() {
        return Err(Error::Dimension {
            op: "maxpool2x2_backward",
            axis: "output",
            expected: indices.0.len().to_string(),
            actual: grad_out.len(),
        });
    }
    let mut gin = Tensor::zeros(input_shape);
    let g = gin.data_mut();
    for (&i, &v) in indices.0.iter().zip(grad_out.data()) {
        g[i] += v;
    }
    Ok(gin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(maxpool2x2(&x).unwrap().0.data(), &[4.0]);

        let ramp = Tensor::from_vec([1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
        assert_eq!(maxpool2x2(&ramp).unwrap().0.data(), &[5., 7., 13., 15.]);

        let c = Tensor::full([2, 3, 4, 6], 1.5);
        let (y, _) = maxpool2x2(&c).unwrap();
        assert_eq!(y.shape(), [2, 3, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn ties_route_to_first() {
        let x = Tensor::full([1, 1, 2, 2], 7.0);
        let (_, idx) = maxpool2x2(&x).unwrap();
        let g = maxpool2x2_backward(&Tensor::full([1, 1, 1, 1], 1.0), &idx, x.shape()).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_sizes_rejected() {
        assert!(matches!(
            maxpool2x2(&Tensor::zeros([1, 1, 3, 4])),
            Err(Error::Dimension { axis: "height", .. })
        ));
        assert!(matches!(
            maxpool2x2(&Tensor::zeros([1, 1, 4, 5])),
            Err(Error::Dimension { axis: "width", .. })
        ));
    }
}
