use super::{ensure_same_shape, Tensor};
use crate::error::{Error, Result};

/// Concatenates along the channel axis, `a`'s channels first.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            lhs: sa,
            rhs: sb,
        });
    }
    let (n, plane) = (sa[0], a.plane());
    let (la, lb) = (sa[1] * plane, sb[1] * plane);
    let mut data = Vec::with_capacity(n * (la + lb));
    for ni in 0..n {
        data.extend_from_slice(&a.data()[ni * la..(ni + 1) * la]);
        data.extend_from_slice(&b.data()[ni * lb..(ni + 1) * lb]);
    }
    Tensor::from_vec([n, sa[1] + sb[1], sa[2], sa[3]], data)
}

/// Channels `[start, start + len)`; the backward of [`concat_channels`].
pub fn slice_channels(t: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let [n, c, h, w] = t.shape();
    if start + len > c {
        return Err(Error::Dimension {
            op: "slice_channels",
            axis: "channel",
            expected: format!(">= {}", start + len),
            actual: c,
        });
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * len * plane);
    for ni in 0..n {
        let base = (ni * c + start) * plane;
        data.extend_from_slice(&t.data()[base..base + len * plane]);
    }
    Tensor::from_vec([n, len, h, w], data)
}

/// Elementwise sum; the backward passes the upstream gradient to both inputs.
pub fn residual_add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    ensure_same_shape("residual_add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}
