//! Rank-4 `(N, C, H, W)` tensors and the primitive operators the network is
//! built from.
//!
//! Every operator comes as a pure forward function plus a backward function
//! that maps the upstream gradient (and whatever the forward pass needs to
//! remember) to input and parameter gradients. Stateful wrappers that keep
//! the forward context around live in [`crate::layers`].

mod activation;
mod batchnorm;
mod combine;
mod conv;
mod pool;
mod upsample;

pub use activation::{gelu, gelu_backward, relu, relu_backward, sigmoid, sigmoid_backward};
pub use batchnorm::{batchnorm2d, batchnorm2d_backward, BatchNormGrads, BatchNormState, BnMode, BnStats};
pub use combine::{concat_channels, residual_add, slice_channels};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads, ConvSpec};
pub use pool::{maxpool2x2, maxpool2x2_backward, MaxPoolIndices};
pub use upsample::{bilinear_upsample2x, bilinear_upsample2x_backward};

use crate::error::{Error, Result};

/// Shape of a rank-4 tensor: `[N, C, H, W]`.
pub type Shape = [usize; 4];

/// Dense rank-4 `f32` tensor stored row-major in `(N, C, H, W)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; numel(shape)],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(Error::Dimension {
                op: "Tensor::from_vec",
                axis: "data",
                expected: format!("{} elements for shape {:?}", numel(shape), shape),
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// Builds a tensor from a closure over `(n, c, h, w)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(numel(shape));
        for ni in 0..n {
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        data.push(f(ni, ci, hi, wi));
                    }
                }
            }
        }
        Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Number of elements in one `(H, W)` plane.
    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f32) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + h) * ws + w
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f32]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::Dimension {
                op: "accumulate_grad",
                axis: "data",
                expected: self.data.len().to_string(),
                actual: delta.len(),
            });
        }
        let grad = self.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Mutable access to data and gradient at once, as an optimizer needs.
    pub fn data_and_grad_mut(&mut self) -> (&mut [f32], Option<&[f32]>) {
        (&mut self.data, self.grad.as_deref())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies batch entry `n` out as a batch-of-one tensor.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let per = numel(self.shape) / self.shape[0].max(1);
        let mut shape = self.shape;
        shape[0] = 1;
        Tensor {
            shape,
            data: self.data[n * per..(n + 1) * per].to_vec(),
            grad: None,
            requires_grad: false,
        }
    }

    /// Stacks tensors that agree on `(C, H, W)` along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Validation("cannot stack an empty list".into()))?;
        let mut shape = first.shape;
        let mut data = Vec::new();
        for t in items {
            if t.shape[1..] != first.shape[1..] {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    lhs: first.shape,
                    rhs: t.shape,
                });
            }
            data.extend_from_slice(&t.data);
        }
        shape[0] = items.iter().map(|t| t.shape[0]).sum();
        Tensor::from_vec(shape, data)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

pub fn numel(shape: Shape) -> usize {
    shape.iter().product()
}

pub(crate) fn ensure_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape,
            rhs: b.shape,
        });
    }
    Ok(())
}
