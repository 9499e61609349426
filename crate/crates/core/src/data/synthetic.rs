use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SegmentationSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters of the synthetic ultrasound-like corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub size: usize,
    pub seed: u64,
    pub in_channels: usize,
}

const MIN_FOREGROUND: f64 = 0.01;
const MAX_FOREGROUND: f64 = 0.5;

impl SyntheticSpec {
    pub fn new(n: usize, size: usize, seed: u64) -> Self {
        SyntheticSpec {
            n,
            size,
            seed,
            in_channels: 3,
        }
    }

    pub fn generate(&self) -> Result<Vec<SegmentationSample>> {
        if self.size == 0 || !self.size.is_multiple_of(16) {
            return Err(Error::config(
                "size",
                format!(
                    "synthetic image size must be a positive multiple of 16, got {}",
                    self.size
                ),
            ));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n).map(|i| self.sample(i, &mut rng)).collect()
    }

    fn sample(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<SegmentationSample> {
        let s = self.size;
        let mask = loop {
            let count = rng.random_range(1..=3);
            let ellipses: Vec<Ellipse> = (0..count).map(|_| Ellipse::random(rng, s as f64)).collect();
            let mask: Vec<f32> = (0..s * s)
                .map(|i| {
                    let (y, x) = ((i / s) as f64 + 0.5, (i % s) as f64 + 0.5);
                    ellipses.iter().any(|e| e.contains(x, y)) as u8 as f32
                })
                .collect();
            let frac = mask.iter().sum::<f32>() as f64 / (s * s) as f64;
            if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
                break mask;
            }
        };

        let soft = box_blur(&mask, s, 2);
        // background brightness ramps along a random direction
        let angle = rng.random_range(0.0..2.0 * PI);
        let (gx, gy) = (angle.cos(), angle.sin());
        let base = rng.random_range(0.45..0.65);
        let contrast = rng.random_range(0.55..0.75);
        let speckle = Normal::new(1.0, 0.18).expect("valid normal");
        let mut gray = Vec::with_capacity(s * s);
        for (i, &m) in soft.iter().enumerate().take(s * s) {
            let (y, x) = ((i / s) as f64 / s as f64 - 0.5, (i % s) as f64 / s as f64 - 0.5);
            let background = base + 0.25 * (gx * x + gy * y);
            let tissue = background * (1.0 - contrast * m as f64);
            let noisy = tissue * speckle.sample(rng);
            gray.push(noisy.clamp(0.0, 1.0) as f32);
        }
        let mut image = Vec::with_capacity(self.in_channels * s * s);
        for _ in 0..self.in_channels {
            image.extend_from_slice(&gray);
        }
        SegmentationSample::new(
            format!("synthetic_{index:05}"),
            Tensor::from_vec([1, self.in_channels, s, s], image)?,
            Tensor::from_vec([1, 1, s, s], mask)?,
        )
    }
}

/// `n` samples of `size`×`size` 3-channel images. Identical for identical
/// arguments.
pub fn generate_synthetic(n: usize, size: usize, seed: u64) -> Result<Vec<SegmentationSample>> {
    SyntheticSpec::new(n, size, seed).generate()
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, size: f64) -> Self {
        let theta = rng.random_range(0.0..PI);
        Ellipse {
            cx: rng.random_range(0.2..0.8) * size,
            cy: rng.random_range(0.2..0.8) * size,
            a: rng.random_range(0.06..0.3) * size,
            b: rng.random_range(0.06..0.3) * size,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Separable box blur with edge clamping.
fn box_blur(src: &[f32], size: usize, radius: usize) -> Vec<f32> {
    let r = radius as isize;
    let n = size as isize;
    let width = (2 * radius + 1) as f32;
    let clamp = |v: isize| v.clamp(0, n - 1) as usize;
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..size {
        for x in 0..n {
            let sum: f32 = (-r..=r).map(|d| src[y * size + clamp(x + d)]).sum();
            tmp[y * size + x as usize] = sum / width;
        }
    }
    let mut out = vec![0.0f32; src.len()];
    for y in 0..n {
        for x in 0..size {
            let sum: f32 = (-r..=r).map(|d| tmp[clamp(y + d) * size + x]).sum();
            out[y as usize * size + x] = sum / width;
        }
    }
    out
}
