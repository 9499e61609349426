use super::{ensure_same_shape, Tensor};
use crate::error::Result;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact GELU, `x·Φ(x)` with the erf-based normal CDF.
pub fn gelu(input: &Tensor) -> Tensor {
    input.map(|x| {
        let x = x as f64;
        (x * normal_cdf(x)) as f32
    })
}

/// `d/dx [x·Φ(x)] = Φ(x) + x·φ(x)`, evaluated at the forward input.
pub fn gelu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    ensure_same_shape("gelu_backward", grad_out, input)?;
    Ok(zip_map(grad_out, input, |g, x| {
        let x = x as f64;
        let pdf = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
        (g as f64 * (normal_cdf(x) + x * pdf)) as f32
    }))
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// Subgradient 0 at `x == 0`.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    ensure_same_shape("relu_backward", grad_out, input)?;
    Ok(zip_map(grad_out, input, |g, x| if x > 0.0 { g } else { 0.0 }))
}

pub(crate) fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic function, branch-split so neither side overflows.
pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

/// Gradient through the sigmoid given its forward *output*.
pub fn sigmoid_backward(grad_out: &Tensor, output: &Tensor) -> Result<Tensor> {
    ensure_same_shape("sigmoid_backward", grad_out, output)?;
    Ok(zip_map(grad_out, output, |g, s| g * s * (1.0 - s)))
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("shapes checked by caller")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f32) -> Tensor {
        Tensor::full([1, 1, 1, 1], x)
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(&scalar(0.0)).data()[0], 0.0);
        assert!((gelu(&scalar(10.0)).data()[0] - 10.0).abs() < 1e-6);
        // 1·Φ(1) from a 30-digit erf evaluation
        assert!((gelu(&scalar(1.0)).data()[0] - 0.841_344_7).abs() < 1e-5);
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(&scalar(-1.0)).data()[0], 0.0);
        assert_eq!(relu(&scalar(2.0)).data()[0], 2.0);
        let g = relu_backward(&scalar(1.0), &scalar(0.0)).unwrap();
        assert_eq!(g.data()[0], 0.0);
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(&scalar(0.0)).data()[0], 0.5);
        let hi = sigmoid(&scalar(500.0)).data()[0];
        let lo = sigmoid(&scalar(-500.0)).data()[0];
        assert_eq!(hi, 1.0);
        assert_eq!(lo, 0.0);
        for i in -40..=40 {
            let x = i as f32 * 0.25;
            let s = sigmoid_scalar(x);
            let m = sigmoid_scalar(-x);
            assert!((m - (1.0 - s)).abs() < 1e-7, "x = {x}");
        }
    }
}
