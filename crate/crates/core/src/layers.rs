//! Stateful layers: primitive operators bundled with their trainable
//! parameters and the context their backward pass needs.
//!
//! A layer remembers what it saw in `forward` only when the [`Mode`] asks
//! for gradients. `backward` consumes that context, so calling it twice
//! without a fresh forward is a [`Error::State`]. Parameter gradients are
//! accumulated, never overwritten.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm2d, batchnorm2d_backward, bilinear_upsample2x, bilinear_upsample2x_backward, conv2d, conv2d_backward,
    gelu, gelu_backward, maxpool2x2, maxpool2x2_backward, relu, relu_backward, BatchNormState, BnMode, BnStats,
    ConvSpec, MaxPoolIndices, Shape, Tensor,
};

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running stats updated, gradients recorded.
    Train,
    /// Running statistics, nothing recorded.
    Eval,
    /// Running statistics with gradients recorded.
    EvalGrad,
}

impl Mode {
    pub fn records(self) -> bool {
        !matches!(self, Mode::Eval)
    }

    pub fn bn_mode(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Train,
            Mode::Eval | Mode::EvalGrad => BnMode::Eval,
        }
    }
}

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, mut value: Tensor) -> Self {
        value.set_requires_grad(true);
        Parameter {
            name: name.into(),
            value,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Stable 64-bit FNV-1a, used to derive per-parameter RNG streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// RNG for one named parameter. Depends only on `(seed, name)`, so a rebuild
/// (or a partial rebuild after block substitution) reproduces every
/// untouched parameter bit for bit.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: Parameter,
    pub bias: Option<Parameter>,
    saved_input: Option<Tensor>,
}

/// Squared negative slope `a²` in the He gain `sqrt(2 / (1 + a²))`.
const LEAKY_SLOPE_SQ: f32 = 5.0;

impl Conv2d {
    /// He-style fan-in uniform weights with leaky-ReLU slope `a = sqrt(5)`,
    /// i.e. `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the common framework
    /// default; bias from the same range.
    pub fn new(name: impl Into<String>, spec: ConvSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let name = name.into();
        let fan_in = (spec.in_per_group() * spec.kernel * spec.kernel) as f32;
        let wname = format!("{name}.weight");
        let bound = (6.0 / ((1.0 + LEAKY_SLOPE_SQ) * fan_in)).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = param_rng(seed, &wname);
        let w: Vec<f32> = (0..spec.weight_len()).map(|_| dist.sample(&mut rng)).collect();
        let weight = Parameter::new(wname, Tensor::from_vec(spec.weight_shape(), w)?);
        let bias = if spec.has_bias {
            let bname = format!("{name}.bias");
            let bound = 1.0 / fan_in.sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let mut rng = param_rng(seed, &bname);
            let b: Vec<f32> = (0..spec.out_channels).map(|_| dist.sample(&mut rng)).collect();
            Some(Parameter::new(
                bname,
                Tensor::from_vec([spec.out_channels, 1, 1, 1], b)?,
            ))
        } else {
            None
        };
        Ok(Conv2d {
            name,
            spec,
            weight,
            bias,
            saved_input: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = conv2d(
            x,
            &self.weight.value,
            self.bias.as_ref().map(|b| b.value.data()),
            &self.spec,
        )?;
        self.saved_input = mode.records().then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.saved_input.take().ok_or_else(|| missing_forward(&self.name))?;
        let g = conv2d_backward(grad_out, &x, &self.weight.value, &self.spec)?;
        self.weight.value.accumulate_grad(&g.weight)?;
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), g.bias) {
            b.value.accumulate_grad(&gb)?;
        }
        Ok(g.input)
    }
}

fn missing_forward(name: &str) -> Error {
    Error::State(format!(
        "`{name}`: backward called without a preceding recorded forward"
    ))
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub name: String,
    pub gamma: Parameter,
    pub beta: Parameter,
    pub state: BatchNormState,
    saved: Option<(Tensor, BnStats, BnMode)>,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        let name = name.into();
        BatchNorm2d {
            gamma: Parameter::new(format!("{name}.weight"), Tensor::full([channels, 1, 1, 1], 1.0)),
            beta: Parameter::new(format!("{name}.bias"), Tensor::zeros([channels, 1, 1, 1])),
            state: BatchNormState::new(channels),
            saved: None,
            name,
        }
    }

    pub fn channels(&self) -> usize {
        self.state.channels()
    }

    pub fn running_mean_name(&self) -> String {
        format!("{}.running_mean", self.name)
    }

    pub fn running_var_name(&self) -> String {
        format!("{}.running_var", self.name)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.state.gamma.copy_from_slice(self.gamma.value.data());
        self.state.beta.copy_from_slice(self.beta.value.data());
        self.state.mode = mode.bn_mode();
        let (y, stats) = batchnorm2d(x, &mut self.state)?;
        self.saved = mode.records().then(|| (x.clone(), stats, mode.bn_mode()));
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (x, stats, mode) = self.saved.take().ok_or_else(|| missing_forward(&self.name))?;
        let g = batchnorm2d_backward(grad_out, &x, self.gamma.value.data(), &stats, mode)?;
        self.gamma.value.accumulate_grad(&g.gamma)?;
        self.beta.value.accumulate_grad(&g.beta)?;
        Ok(g.input)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Gelu {
    saved_input: Option<Tensor>,
}

impl Gelu {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        self.saved_input = mode.records().then(|| x.clone());
        gelu(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.saved_input.take().ok_or_else(|| missing_forward("gelu"))?;
        gelu_backward(grad_out, &x)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    saved_input: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        self.saved_input = mode.records().then(|| x.clone());
        relu(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.saved_input.take().ok_or_else(|| missing_forward("relu"))?;
        relu_backward(grad_out, &x)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MaxPool2x2 {
    saved: Option<(MaxPoolIndices, Shape)>,
}

impl MaxPool2x2 {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (y, idx) = maxpool2x2(x)?;
        self.saved = mode.records().then(|| (idx, x.shape()));
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (idx, shape) = self.saved.take().ok_or_else(|| missing_forward("maxpool"))?;
        maxpool2x2_backward(grad_out, &idx, shape)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Upsample2x {
    saved_shape: Option<Shape>,
}

impl Upsample2x {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        self.saved_shape = mode.records().then(|| x.shape());
        bilinear_upsample2x(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.saved_shape.take().ok_or_else(|| missing_forward("upsample"))?;
        bilinear_upsample2x_backward(grad_out, shape)
    }
}

/// Borrowed view of a parameterized primitive layer.
#[derive(Debug, Clone, Copy)]
pub enum LayerRef<'a> {
    Conv(&'a Conv2d),
    Norm(&'a BatchNorm2d),
}

#[derive(Debug)]
pub enum LayerMut<'a> {
    Conv(&'a mut Conv2d),
    Norm(&'a mut BatchNorm2d),
}

/// Anything that owns parameterized layers, in a stable order.
pub trait Module {
    fn layers(&self) -> Vec<LayerRef<'_>>;
    fn layers_mut(&mut self) -> Vec<LayerMut<'_>>;

    fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for layer in self.layers() {
            match layer {
                LayerRef::Conv(c) => {
                    out.push(&c.weight);
                    out.extend(c.bias.as_ref());
                }
                LayerRef::Norm(b) => {
                    out.push(&b.gamma);
                    out.push(&b.beta);
                }
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for layer in self.layers_mut() {
            match layer {
                LayerMut::Conv(c) => {
                    out.push(&mut c.weight);
                    out.extend(c.bias.as_mut());
                }
                LayerMut::Norm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
            }
        }
        out
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.value.zero_grad();
        }
    }
}

impl Module for Conv2d {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        vec![LayerRef::Conv(self)]
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        vec![LayerMut::Conv(self)]
    }
}

impl Module for BatchNorm2d {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        vec![LayerRef::Norm(self)]
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        vec![LayerMut::Norm(self)]
    }
}
