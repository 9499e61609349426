use crate::complexity::{OpKind, Trace};
use crate::error::Result;
use crate::layers::{BatchNorm2d, Conv2d, LayerMut, LayerRef, Mode, Module, Relu};
use crate::tensor::{ConvSpec, Shape, Tensor};

/// 3×3 convolution (stride 1, padding 1) → BatchNorm → ReLU.
///
/// Serves as the stem and as the channel-expansion block after each
/// encoder level.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    relu: Relu,
}

impl ConvBlock {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, seed: u64) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv2d::new(
                format!("{name}.conv"),
                ConvSpec::same(in_channels, out_channels, 3),
                seed,
            )?,
            bn: BatchNorm2d::new(format!("{name}.bn"), out_channels),
            relu: Relu::default(),
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.conv.forward(x, mode)?;
        let y = self.bn.forward(&y, mode)?;
        Ok(self.relu.forward(&y, mode))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(grad)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }

    pub fn trace(&self, input: Shape, t: &mut Trace) -> Result<Shape> {
        let s = t.conv(&self.conv, input)?;
        let s = t.norm(&self.bn, s);
        Ok(t.elementwise(&format!("{}.relu", self.bn.name), OpKind::Relu, s))
    }
}

impl Module for ConvBlock {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        vec![LayerRef::Conv(&self.conv), LayerRef::Norm(&self.bn)]
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        vec![LayerMut::Conv(&mut self.conv), LayerMut::Norm(&mut self.bn)]
    }
}

/// Two stacked [`ConvBlock`]s, the classic U-Net stage.
#[derive(Debug, Clone)]
pub struct DoubleConv {
    pub first: ConvBlock,
    pub second: ConvBlock,
}

impl DoubleConv {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, seed: u64) -> Result<Self> {
        Ok(DoubleConv {
            first: ConvBlock::new(&format!("{name}.conv1"), in_channels, out_channels, seed)?,
            second: ConvBlock::new(&format!("{name}.conv2"), out_channels, out_channels, seed)?,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.first.forward(x, mode)?;
        self.second.forward(&y, mode)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.second.backward(grad)?;
        self.first.backward(&g)
    }

    pub fn trace(&self, input: Shape, t: &mut Trace) -> Result<Shape> {
        let s = self.first.trace(input, t)?;
        self.second.trace(s, t)
    }
}

impl Module for DoubleConv {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        let mut v = self.first.layers();
        v.extend(self.second.layers());
        v
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        let mut v = self.first.layers_mut();
        v.extend(self.second.layers_mut());
        v
    }
}
