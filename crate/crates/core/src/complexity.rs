//! Analytic parameter and multiply-accumulate accounting.
//!
//! Models describe their wiring as a [`Trace`]: a flat list of operators with
//! input and output shapes, produced without touching any data. The counters
//! turn that list into a [`ComplexityReport`].
//!
//! Convolutions cost `k²·(C_in/groups)·C_out·H_out·W_out` MACs. Every other
//! operator (BatchNorm, activations, residual adds, pooling, upsampling) is
//! charged one op per output element; concatenation is free. Reported
//! "GFLOPs" are MACs / 1e9 unless [`FlopConvention::TwoPerMac`] is chosen.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::layers::{BatchNorm2d, Conv2d};
use crate::model::Model;
use crate::tensor::{numel, ConvSpec, Shape};

/// Spatial size at which reports are produced unless told otherwise.
pub const DEFAULT_SIZE: usize = 256;

/// Parameter report for a built model. Parameter counts do not depend on the
/// input size; MACs in the returned report are those at the default size.
pub fn count_params(model: &Model) -> Result<ComplexityReport> {
    count_macs(model, [1, model.config().in_channels, DEFAULT_SIZE, DEFAULT_SIZE])
}

/// Full report at `input_shape`.
pub fn count_macs(model: &Model, input_shape: Shape) -> Result<ComplexityReport> {
    model.complexity(input_shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Conv(ConvSpec),
    BatchNorm { channels: usize },
    Gelu,
    Relu,
    Add,
    MaxPool,
    Upsample,
    Concat,
}

impl OpKind {
    pub fn label(&self) -> &'static str {
        match self {
            OpKind::Conv(s) if s.is_depthwise() => "dwconv",
            OpKind::Conv(s) if s.is_pointwise() => "pwconv",
            OpKind::Conv(s) if s.groups > 1 => "gconv",
            OpKind::Conv(_) => "conv",
            OpKind::BatchNorm { .. } => "bn",
            OpKind::Gelu => "gelu",
            OpKind::Relu => "relu",
            OpKind::Add => "add",
            OpKind::MaxPool => "maxpool",
            OpKind::Upsample => "upsample",
            OpKind::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    pub name: String,
    pub kind: OpKind,
    pub input: Shape,
    pub output: Shape,
}

/// Symbolic forward pass: the operator list a forward would execute.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub ops: Vec<OpRecord>,
}

impl Trace {
    fn push(&mut self, name: String, kind: OpKind, input: Shape, output: Shape) -> Shape {
        self.ops.push(OpRecord {
            name,
            kind,
            input,
            output,
        });
        output
    }

    pub fn conv(&mut self, conv: &Conv2d, input: Shape) -> Result<Shape> {
        let out = conv.spec.output_shape(input)?;
        Ok(self.push(conv.name.clone(), OpKind::Conv(conv.spec), input, out))
    }

    pub fn norm(&mut self, bn: &BatchNorm2d, input: Shape) -> Shape {
        self.push(
            bn.name.clone(),
            OpKind::BatchNorm {
                channels: bn.channels(),
            },
            input,
            input,
        )
    }

    pub fn elementwise(&mut self, name: &str, kind: OpKind, input: Shape) -> Shape {
        self.push(name.to_string(), kind, input, input)
    }

    pub fn pool(&mut self, name: &str, input: Shape) -> Result<Shape> {
        if !input[2].is_multiple_of(2) || !input[3].is_multiple_of(2) {
            return Err(Error::Dimension {
                op: "maxpool2x2",
                axis: "height/width",
                expected: "even sizes".into(),
                actual: if !input[2].is_multiple_of(2) {
                    input[2]
                } else {
                    input[3]
                },
            });
        }
        let out = [input[0], input[1], input[2] / 2, input[3] / 2];
        Ok(self.push(name.to_string(), OpKind::MaxPool, input, out))
    }

    pub fn upsample(&mut self, name: &str, input: Shape) -> Shape {
        let out = [input[0], input[1], input[2] * 2, input[3] * 2];
        self.push(name.to_string(), OpKind::Upsample, input, out)
    }

    pub fn concat(&mut self, name: &str, a: Shape, b: Shape) -> Result<Shape> {
        if a[0] != b[0] || a[2..] != b[2..] {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                lhs: a,
                rhs: b,
            });
        }
        let out = [a[0], a[1] + b[1], a[2], a[3]];
        Ok(self.push(name.to_string(), OpKind::Concat, a, out))
    }
}

/// Counts for one operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub kind: OpKind,
    pub output: Shape,
    /// Trainable parameters.
    pub params: u64,
    /// Non-trainable state (BatchNorm running statistics).
    pub buffers: u64,
    pub macs: u64,
}

impl LayerCost {
    pub fn is_conv(&self) -> bool {
        matches!(self.kind, OpKind::Conv(_))
    }
}

pub fn layer_cost(op: &OpRecord) -> LayerCost {
    let elements = numel(op.output) as u64;
    let (params, buffers, macs) = match op.kind {
        OpKind::Conv(spec) => {
            let [n, _, oh, ow] = op.output;
            (spec.param_count() as u64, 0, (spec.weight_len() * n * oh * ow) as u64)
        }
        OpKind::BatchNorm { channels } => (2 * channels as u64, 2 * channels as u64, elements),
        OpKind::Concat => (0, 0, 0),
        OpKind::Gelu | OpKind::Relu | OpKind::Add | OpKind::MaxPool | OpKind::Upsample => (0, 0, elements),
    };
    LayerCost {
        name: op.name.clone(),
        kind: op.kind,
        output: op.output,
        params,
        buffers,
        macs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlopConvention {
    /// One multiply-accumulate reported as one FLOP.
    #[default]
    MacAsFlop,
    TwoPerMac,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityReport {
    pub input_shape: Shape,
    pub per_layer: Vec<LayerCost>,
    pub total_params: u64,
    pub total_buffers: u64,
    pub total_macs: u64,
    pub conv_macs: u64,
}

impl ComplexityReport {
    pub fn from_trace(input_shape: Shape, trace: &Trace) -> Self {
        let per_layer: Vec<LayerCost> = trace.ops.iter().map(layer_cost).collect();
        ComplexityReport {
            input_shape,
            total_params: per_layer.iter().map(|l| l.params).sum(),
            total_buffers: per_layer.iter().map(|l| l.buffers).sum(),
            total_macs: per_layer.iter().map(|l| l.macs).sum(),
            conv_macs: per_layer.iter().filter(|l| l.is_conv()).map(|l| l.macs).sum(),
            per_layer,
        }
    }

    pub fn params_millions(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn gflops(&self, convention: FlopConvention) -> f64 {
        let factor = match convention {
            FlopConvention::MacAsFlop => 1.0,
            FlopConvention::TwoPerMac => 2.0,
        };
        factor * self.total_macs as f64 / 1e9
    }

    /// Human-readable per-layer table with totals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let width = self.per_layer.iter().map(|l| l.name.len()).max().unwrap_or(4).max(5);
        let _ = writeln!(
            s,
            "{:<width$}  {:<8}  {:>18}  {:>10}  {:>14}",
            "layer", "kind", "output", "params", "macs"
        );
        for l in &self.per_layer {
            let _ = writeln!(
                s,
                "{:<width$}  {:<8}  {:>18}  {:>10}  {:>14}",
                l.name,
                l.kind.label(),
                format!("{:?}", l.output),
                l.params,
                l.macs
            );
        }
        let [n, c, h, w] = self.input_shape;
        let _ = writeln!(s, "input: {n}x{c}x{h}x{w}");
        let _ = writeln!(
            s,
            "total params: {} ({:.4} M), running-stat buffers: {}",
            self.total_params,
            self.params_millions(),
            self.total_buffers
        );
        let _ = writeln!(
            s,
            "total MACs: {} ({:.4} G), conv-only MACs: {} ({:.4} G)",
            self.total_macs,
            self.gflops(FlopConvention::MacAsFlop),
            self.conv_macs,
            self.conv_macs as f64 / 1e9
        );
        s
    }

    /// One `layer,params,macs` line per layer, then `total,<params>,<macs>`.
    pub fn to_key_values(&self) -> String {
        let mut s = String::from("layer,params,macs\n");
        for l in &self.per_layer {
            let _ = writeln!(s, "{},{},{}", l.name, l.params, l.macs);
        }
        let _ = writeln!(s, "total,{},{}", self.total_params, self.total_macs);
        s
    }
}
