//! Grouped 2-D convolution with zero padding.
//!
//! Two kernels back [`conv2d`]: a direct sliding-window loop for depthwise
//! convolutions (one filter per channel), and im2col + SGEMM for everything
//! else. A stride-1, unpadded 1×1 convolution skips im2col entirely because
//! the input plane already is the column matrix.

use super::{numel, Shape, Tensor};
use crate::error::{Error, Result};

/// Static description of a convolution layer. Kernels are square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Dense `k×k` convolution with "same" padding and a bias.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            groups: 1,
            has_bias: true,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::same(in_channels, out_channels, 1)
    }

    pub fn depthwise(channels: usize, kernel: usize) -> Self {
        ConvSpec {
            groups: channels,
            ..Self::same(channels, channels, kernel)
        }
    }

    pub fn with_groups(self, groups: usize) -> Self {
        ConvSpec { groups, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be positive"));
        }
        if self.out_channels == 0 {
            return Err(Error::config("out_channels", "must be positive"));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::config(
                "kernel",
                format!("must be a positive odd integer, got {}", self.kernel),
            ));
        }
        if self.stride == 0 {
            return Err(Error::config("stride", "must be positive"));
        }
        if self.groups == 0 {
            return Err(Error::config("groups", "must be positive"));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::config(
                "groups",
                format!(
                    "{} groups must divide in_channels {} and out_channels {}",
                    self.groups, self.in_channels, self.out_channels
                ),
            ));
        }
        Ok(())
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.padding == 0
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// `[out_channels, in_channels / groups, k, k]`.
    pub fn weight_shape(&self) -> Shape {
        [self.out_channels, self.in_per_group(), self.kernel, self.kernel]
    }

    pub fn weight_len(&self) -> usize {
        numel(self.weight_shape())
    }

    /// Trainable parameter count: weights plus optional bias.
    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.has_bias { self.out_channels } else { 0 }
    }

    /// Output spatial size, `None` when the padded input is smaller than the kernel.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input[1] != self.in_channels {
            return Err(Error::Dimension {
                op: "conv2d",
                axis: "channel",
                expected: self.in_channels.to_string(),
                actual: input[1],
            });
        }
        let (oh, ow) = self.output_hw(input[2], input[3]).ok_or(Error::Dimension {
            op: "conv2d",
            axis: "height/width",
            expected: format!(">= {} after padding", self.kernel),
            actual: input[2].min(input[3]) + 2 * self.padding,
        })?;
        Ok([input[0], self.out_channels, oh, ow])
    }

    /// Multiply-accumulates for one forward pass over `input`.
    pub fn macs(&self, input: Shape) -> Result<u64> {
        let [n, _, oh, ow] = self.output_shape(input)?;
        Ok((self.weight_len() * n * oh * ow) as u64)
    }
}

fn check_operands(input: &Tensor, weight: &Tensor, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Shape> {
    let out = spec.output_shape(input.shape())?;
    let expected = spec.weight_shape();
    let got = weight.shape();
    const AXES: [&str; 4] = [
        "weight out_channels",
        "weight in_channels/groups",
        "weight kernel height",
        "weight kernel width",
    ];
    for (i, axis) in AXES.iter().enumerate() {
        if expected[i] != got[i] {
            return Err(Error::Dimension {
                op: "conv2d",
                axis,
                expected: expected[i].to_string(),
                actual: got[i],
            });
        }
    }
    match (spec.has_bias, bias) {
        (true, Some(b)) if b.len() != spec.out_channels => Err(Error::Dimension {
            op: "conv2d",
            axis: "bias",
            expected: spec.out_channels.to_string(),
            actual: b.len(),
        }),
        (true, None) => Err(Error::config("has_bias", "spec declares a bias but none was supplied")),
        (false, Some(_)) => Err(Error::config("has_bias", "bias supplied for a bias-free spec")),
        _ => Ok(out),
    }
}

/// Forward convolution.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Tensor> {
    let out_shape = check_operands(input, weight, bias, spec)?;
    let mut out = Tensor::zeros(out_shape);
    if spec.is_depthwise() {
        depthwise_forward(input, weight.data(), spec, &mut out);
    } else {
        gemm_forward(input, weight.data(), spec, &mut out);
    }
    if let Some(bias) = bias {
        let plane = out.plane();
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let b = bias[i % spec.out_channels];
            chunk.iter_mut().for_each(|v| *v += b);
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its operands.
#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

/// Backward convolution: given the forward operands and `dL/d(out)`.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor, spec: &ConvSpec) -> Result<Conv2dGrads> {
    let bias_stub = spec.has_bias.then(|| vec![0.0; spec.out_channels]);
    let out_shape = check_operands(input, weight, bias_stub.as_deref(), spec)?;
    if grad_out.shape() != out_shape {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            lhs: out_shape,
            rhs: grad_out.shape(),
        });
    }
    let mut grad_input = Tensor::zeros(input.shape());
    let mut grad_weight = vec![0.0f32; spec.weight_len()];
    if spec.is_depthwise() {
        depthwise_backward(grad_out, input, weight.data(), spec, &mut grad_input, &mut grad_weight);
    } else {
        gemm_backward(grad_out, input, weight.data(), spec, &mut grad_input, &mut grad_weight);
    }
    let bias = spec.has_bias.then(|| {
        let mut gb = vec![0.0f32; spec.out_channels];
        let plane = grad_out.plane();
        for (i, chunk) in grad_out.data().chunks(plane).enumerate() {
            gb[i % spec.out_channels] += chunk.iter().sum::<f32>();
        }
        gb
    });
    Ok(Conv2dGrads {
        input: grad_input,
        weight: grad_weight,
        bias,
    })
}

/// Valid `[lo, hi)` output range along one axis for kernel tap `tap`, so
/// that `o * stride + tap - padding` lands inside `[0, size)`.
fn valid_range(tap: usize, padding: usize, stride: usize, size: usize, out: usize) -> (usize, usize) {
    let lo = if tap >= padding {
        0
    } else {
        (padding - tap).div_ceil(stride)
    };
    // largest o with o*stride + tap - padding <= size - 1
    let limit = size + padding - 1;
    let hi = if limit < tap {
        0
    } else {
        ((limit - tap) / stride + 1).min(out)
    };
    (lo.min(hi), hi)
}

fn depthwise_forward(input: &Tensor, weight: &[f32], spec: &ConvSpec, out: &mut Tensor) {
    let [n, c, h, w] = input.shape();
    let [_, _, oh, ow] = out.shape();
    let k = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let src = input.data();
    let dst = out.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let plane_in = &src[(ni * c + ci) * h * w..][..h * w];
            let plane_out = &mut dst[(ni * c + ci) * oh * ow..][..oh * ow];
            let filt = &weight[ci * k * k..][..k * k];
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_range(ky, p, s, h, oh);
                for kx in 0..k {
                    let wv = filt[ky * k + kx];
                    let (ox_lo, ox_hi) = valid_range(kx, p, s, w, ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let row_out = &mut plane_out[oy * ow + ox_lo..oy * ow + ox_hi];
                        if s == 1 {
                            let ix0 = ox_lo + kx - p;
                            let row_in = &plane_in[iy * w + ix0..][..row_out.len()];
                            for (o, &x) in row_out.iter_mut().zip(row_in) {
                                *o += wv * x;
                            }
                        } else {
                            for (j, o) in row_out.iter_mut().enumerate() {
                                let ix = (ox_lo + j) * s + kx - p;
                                *o += wv * plane_in[iy * w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &[f32],
    spec: &ConvSpec,
    grad_input: &mut Tensor,
    grad_weight: &mut [f32],
) {
    let [n, c, h, w] = input.shape();
    let [_, _, oh, ow] = grad_out.shape();
    let k = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let src = input.data();
    let gout = grad_out.data();
    let gin = grad_input.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let plane_in = &src[(ni * c + ci) * h * w..][..h * w];
            let plane_gin = &mut gin[(ni * c + ci) * h * w..][..h * w];
            let plane_gout = &gout[(ni * c + ci) * oh * ow..][..oh * ow];
            let filt = &weight[ci * k * k..][..k * k];
            let gfilt = &mut grad_weight[ci * k * k..][..k * k];
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_range(ky, p, s, h, oh);
                for kx in 0..k {
                    let wv = filt[ky * k + kx];
                    let (ox_lo, ox_hi) = valid_range(kx, p, s, w, ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let mut acc = 0.0f32;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * s + ky - p;
                        let row_g = &plane_gout[oy * ow + ox_lo..oy * ow + ox_hi];
                        for (j, &g) in row_g.iter().enumerate() {
                            let ix = (ox_lo + j) * s + kx - p;
                            acc += g * plane_in[iy * w + ix];
                            plane_gin[iy * w + ix] += wv * g;
                        }
                    }
                    gfilt[ky * k + kx] += acc;
                }
            }
        }
    }
}

/// Unfolds the channels `[c0, c0 + cs)` of one sample into a
/// `(cs·k·k) × (oh·ow)` column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    plane: &[f32],
    c0: usize,
    cs: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    col: &mut [f32],
) {
    let k = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let ohw = oh * ow;
    for ci in 0..cs {
        let src = &plane[(c0 + ci) * h * w..][..h * w];
        for ky in 0..k {
            let (oy_lo, oy_hi) = valid_range(ky, p, s, h, oh);
            for kx in 0..k {
                let (ox_lo, ox_hi) = valid_range(kx, p, s, w, ow);
                let row = &mut col[((ci * k + ky) * k + kx) * ohw..][..ohw];
                row.fill(0.0);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let dst = &mut row[oy * ow + ox_lo..oy * ow + ox_hi];
                    if s == 1 {
                        let ix0 = ox_lo + kx - p;
                        dst.copy_from_slice(&src[iy * w + ix0..][..dst.len()]);
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            *d = src[iy * w + (ox_lo + j) * s + kx - p];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the planes.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f32],
    c0: usize,
    cs: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    plane: &mut [f32],
) {
    let k = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let ohw = oh * ow;
    for ci in 0..cs {
        let dst = &mut plane[(c0 + ci) * h * w..][..h * w];
        for ky in 0..k {
            let (oy_lo, oy_hi) = valid_range(ky, p, s, h, oh);
            for kx in 0..k {
                let (ox_lo, ox_hi) = valid_range(kx, p, s, w, ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                let row = &col[((ci * k + ky) * k + kx) * ohw..][..ohw];
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let src = &row[oy * ow + ox_lo..oy * ow + ox_hi];
                    for (j, &g) in src.iter().enumerate() {
                        dst[iy * w + (ox_lo + j) * s + kx - p] += g;
                    }
                }
            }
        }
    }
}

/// Row-major matrix view: `(rows, cols, row_stride, col_stride)`.
#[derive(Clone, Copy)]
struct MatView {
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl MatView {
    fn row_major(rows: usize, cols: usize) -> Self {
        MatView {
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    fn t(self) -> Self {
        MatView {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `c = beta·c + a·b` for a row-major `c`.
fn gemm(a: &[f32], av: MatView, b: &[f32], bv: MatView, beta: f32, c: &mut [f32]) {
    assert_eq!(av.cols, bv.rows);
    assert!(a.len() >= av.span() && b.len() >= bv.span());
    assert!(c.len() >= av.rows * bv.cols);
    // SAFETY: the asserts above keep every strided access of `a`, `b` and
    // `c` inside the borrowed slices; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::sgemm(
            av.rows,
            av.cols,
            bv.cols,
            1.0,
            a.as_ptr(),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr(),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr(),
            bv.cols as isize,
            1,
        );
    }
}

fn needs_im2col(spec: &ConvSpec) -> bool {
    !(spec.is_pointwise() && spec.stride == 1)
}

fn gemm_forward(input: &Tensor, weight: &[f32], spec: &ConvSpec, out: &mut Tensor) {
    let [n, c, h, w] = input.shape();
    let [_, oc, oh, ow] = out.shape();
    let ohw = oh * ow;
    let (icg, ocg) = (spec.in_per_group(), spec.out_per_group());
    let kdim = icg * spec.kernel * spec.kernel;
    let mut col = if needs_im2col(spec) {
        vec![0.0f32; kdim * ohw]
    } else {
        Vec::new()
    };
    let src = input.data();
    let dst = out.data_mut();
    for ni in 0..n {
        let sample = &src[ni * c * h * w..][..c * h * w];
        for g in 0..spec.groups {
            let wg = &weight[g * ocg * kdim..][..ocg * kdim];
            let cols: &[f32] = if needs_im2col(spec) {
                im2col(sample, g * icg, icg, h, w, spec, oh, ow, &mut col);
                &col
            } else {
                &sample[g * icg * ohw..][..icg * ohw]
            };
            let out_g = &mut dst[(ni * oc + g * ocg) * ohw..][..ocg * ohw];
            gemm(
                wg,
                MatView::row_major(ocg, kdim),
                cols,
                MatView::row_major(kdim, ohw),
                0.0,
                out_g,
            );
        }
    }
}

fn gemm_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &[f32],
    spec: &ConvSpec,
    grad_input: &mut Tensor,
    grad_weight: &mut [f32],
) {
    let [n, c, h, w] = input.shape();
    let [_, oc, oh, ow] = grad_out.shape();
    let ohw = oh * ow;
    let (icg, ocg) = (spec.in_per_group(), spec.out_per_group());
    let kdim = icg * spec.kernel * spec.kernel;
    let unfold = needs_im2col(spec);
    let mut col = if unfold { vec![0.0f32; kdim * ohw] } else { Vec::new() };
    let mut gcol = vec![0.0f32; kdim * ohw];
    let src = input.data();
    let gout = grad_out.data();
    let gin = grad_input.data_mut();
    for ni in 0..n {
        let sample = &src[ni * c * h * w..][..c * h * w];
        for g in 0..spec.groups {
            let wg = &weight[g * ocg * kdim..][..ocg * kdim];
            let gw = &mut grad_weight[g * ocg * kdim..][..ocg * kdim];
            let gout_g = &gout[(ni * oc + g * ocg) * ohw..][..ocg * ohw];
            let cols: &[f32] = if unfold {
                im2col(sample, g * icg, icg, h, w, spec, oh, ow, &mut col);
                &col
            } else {
                &sample[g * icg * ohw..][..icg * ohw]
            };
            // dW += dY · colsᵀ
            gemm(
                gout_g,
                MatView::row_major(ocg, ohw),
                cols,
                MatView::row_major(kdim, ohw).t(),
                1.0,
                gw,
            );
            // dcols = Wᵀ · dY
            let gin_sample = &mut gin[ni * c * h * w..][..c * h * w];
            if unfold {
                gemm(
                    wg,
                    MatView::row_major(ocg, kdim).t(),
                    gout_g,
                    MatView::row_major(ocg, ohw),
                    0.0,
                    &mut gcol,
                );
                col2im(&gcol, g * icg, icg, h, w, spec, oh, ow, gin_sample);
            } else {
                let target = &mut gin_sample[g * icg * ohw..][..icg * ohw];
                gemm(
                    wg,
                    MatView::row_major(ocg, kdim).t(),
                    gout_g,
                    MatView::row_major(ocg, ohw),
                    1.0,
                    target,
                );
            }
        }
    }
}
