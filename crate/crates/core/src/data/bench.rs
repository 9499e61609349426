use std::time::Instant;

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::Model;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub fps: f64,
    pub median_secs: f64,
    pub iters: usize,
    pub input_shape: Shape,
    pub hardware: String,
}

/// Median eval-mode forward latency over `iters` timed runs after `warmup`
/// discarded runs; `fps = 1 / median`.
pub fn bench_fps(model: &mut Model, input_shape: Shape, warmup: usize, iters: usize) -> Result<BenchReport> {
    if iters == 0 {
        return Err(Error::config("iters", "must be positive"));
    }
    model.check_input(input_shape)?;
    let input = Tensor::from_fn(input_shape, |n, c, h, w| {
        ((n + c * 3 + h * 7 + w * 13) % 17) as f32 / 16.0
    });
    for _ in 0..warmup {
        model.forward(&input, Mode::Eval)?;
    }
    let mut times = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        let out = model.forward(&input, Mode::Eval)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    let median = median.max(f64::MIN_POSITIVE);
    Ok(BenchReport {
        fps: 1.0 / median,
        median_secs: median,
        iters,
        input_shape,
        hardware: hardware_descriptor(),
    })
}

/// CPU model, logical core count and target triple, as far as they can be
/// determined.
pub fn hardware_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{cpu}; {threads} logical cpu(s); {}-{}; single-threaded f32",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}
