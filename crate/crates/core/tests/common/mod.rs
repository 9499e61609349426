//! Independent reference implementations used as test oracles. Everything
//! here is deliberately naive and computed in f64.

#![allow(dead_code)]

pub mod checks;

use cmunext::tensor::{ConvSpec, Shape, Tensor};
pub use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng, scale: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-scale..scale))
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn idx(s: Shape, n: usize, c: usize, h: usize, w: usize) -> usize {
    ((n * s[1] + c) * s[2] + h) * s[3] + w
}

/// Direct seven-loop convolution with zero padding, stride and groups.
pub fn conv_ref(x: &[f64], xs: Shape, w: &[f64], b: Option<&[f64]>, spec: &ConvSpec) -> (Vec<f64>, Shape) {
    let [n, _, h, wd] = xs;
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding as isize);
    let oh = (h + 2 * spec.padding - k) / s + 1;
    let ow = (wd + 2 * spec.padding - k) / s + 1;
    let os = [n, spec.out_channels, oh, ow];
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let mut y = vec![0.0; n * spec.out_channels * oh * ow];
    for ni in 0..n {
        for co in 0..spec.out_channels {
            let g = co / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b[co]);
                    for ci in 0..cin_g {
                        let cin = g * cin_g + ci;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * s) as isize + ky as isize - p;
                                let ix = (ox * s) as isize + kx as isize - p;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let wv = w[((co * cin_g + ci) * k + ky) * k + kx];
                                acc += wv * x[idx(xs, ni, cin, iy as usize, ix as usize)];
                            }
                        }
                    }
                    y[idx(os, ni, co, oy, ox)] = acc;
                }
            }
        }
    }
    (y, os)
}

/// Train-mode batch normalization with biased variance.
pub fn bn_train_ref(x: &[f64], xs: Shape, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let mut y = vec![0.0; x.len()];
    for ci in 0..c {
        let vals: Vec<f64> = (0..n)
            .flat_map(|ni| (0..h * w).map(move |i| (ni, i)))
            .map(|(ni, i)| x[(ni * c + ci) * h * w + i])
            .collect();
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        for ni in 0..n {
            for i in 0..h * w {
                let j = (ni * c + ci) * h * w + i;
                y[j] = gamma[ci] * (x[j] - mean) / (var + eps).sqrt() + beta[ci];
            }
        }
    }
    y
}

pub fn bn_eval_ref(x: &[f64], xs: Shape, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) -> Vec<f64> {
    let [_, c, h, w] = xs;
    x.iter()
        .enumerate()
        .map(|(j, &v)| {
            let ci = (j / (h * w)) % c;
            gamma[ci] * (v - mean[ci]) / (var[ci] + eps).sqrt() + beta[ci]
        })
        .collect()
}

pub fn gelu_ref(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn sigmoid_ref(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn maxpool_ref(x: &[f64], xs: Shape) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let os = [n, c, h / 2, w / 2];
    let mut y = vec![f64::NEG_INFINITY; n * c * (h / 2) * (w / 2)];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x[idx(xs, ni, ci, 2 * oy + dy, 2 * ox + dx)]);
                        }
                    }
                    y[idx(os, ni, ci, oy, ox)] = m;
                }
            }
        }
    }
    y
}

/// Bilinear ×2 with half-pixel centres and edge clamping, written from the
/// sampling formula `src = (dst + 0.5) / 2 − 0.5`.
pub fn upsample_ref(x: &[f64], xs: Shape) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let os = [n, c, 2 * h, 2 * w];
    let coord = |d: usize, size: usize| {
        let src = ((d as f64 + 0.5) / 2.0 - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(size - 1);
        let i1 = (i0 + 1).min(size - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut y = vec![0.0; n * c * 4 * h * w];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..2 * h {
                let (y0, y1, ly) = coord(oy, h);
                for ox in 0..2 * w {
                    let (x0, x1, lx) = coord(ox, w);
                    let v = |yy, xx| x[idx(xs, ni, ci, yy, xx)];
                    y[idx(os, ni, ci, oy, ox)] = (1.0 - ly) * ((1.0 - lx) * v(y0, x0) + lx * v(y0, x1))
                        + ly * ((1.0 - lx) * v(y1, x0) + lx * v(y1, x1));
                }
            }
        }
    }
    y
}

/// `0.5·BCE + Dice` evaluated directly from the definition on probabilities.
pub fn loss_ref(logits: &[f64], target: &[f64]) -> f64 {
    let p: Vec<f64> = logits.iter().map(|&x| sigmoid_ref(x)).collect();
    let m = p.len() as f64;
    let bce = p
        .iter()
        .zip(target)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum::<f64>()
        / m;
    let inter: f64 = p.iter().zip(target).map(|(p, y)| p * y).sum();
    let dice = 1.0 - (2.0 * inter + 1.0) / (p.iter().sum::<f64>() + target.iter().sum::<f64>() + 1.0);
    0.5 * bce + dice
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na.max(nb) == 0.0 {
        0.0
    } else {
        diff / na.max(nb)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closed-form parameter count of one CMUNeXt unit: a biased depthwise conv,
/// two biased pointwise convs through a 4× hidden width, three BatchNorms.
pub fn unit_params(c: usize, k: usize) -> usize {
    let h = 4 * c;
    (k * k * c + c) + 2 * c + (c * h + h) + 2 * h + (h * c + c) + 2 * c
}

/// Closed-form parameter count of a Skip-Fusion block whose grouped 3×3
/// conv maps `2c → g` channels in two groups.
pub fn fusion_params(c: usize, g: usize) -> usize {
    let h = 4 * c;
    (9 * (2 * c / 2) * g + g) + 2 * g + (g * h + h) + 2 * h + (h * c + c) + 2 * c
}

/// Closed-form parameters of a whole CMUNeXt network with `width`-wide
/// fusion grouped stages (`1` = C, `2` = 2C).
pub fn cmunext_params(ch: [usize; 5], depth: [usize; 5], k: [usize; 5], in_ch: usize, fusion_mult: usize) -> usize {
    let conv_block = |i: usize, o: usize| 9 * i * o + o + 2 * o;
    let mut total = conv_block(in_ch, ch[0]);
    for l in 0..5 {
        let w = if l == 0 { ch[0] } else { ch[l - 1] };
        total += depth[l] * unit_params(w, k[l]) + conv_block(w, ch[l]);
    }
    for l in 0..4 {
        total += conv_block(ch[l + 1], ch[l]) + fusion_params(ch[l], fusion_mult * ch[l]);
    }
    total + ch[0] + 1
}
