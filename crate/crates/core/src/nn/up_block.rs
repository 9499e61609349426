use crate::complexity::{OpKind, Trace};
use crate::error::Result;
use crate::layers::{BatchNorm2d, Conv2d, LayerMut, LayerRef, Mode, Module, Relu, Upsample2x};
use crate::tensor::{ConvSpec, Shape, Tensor};

/// Bilinear ×2 → 3×3 conv → BatchNorm → ReLU.
#[derive(Debug, Clone)]
pub struct UpBlock {
    up: Upsample2x,
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    relu: Relu,
}

impl UpBlock {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, seed: u64) -> Result<Self> {
        Ok(UpBlock {
            up: Upsample2x::default(),
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
        let y = self.up.forward(x, mode);
        let y = self.conv.forward(&y, mode)?;
        let y = self.bn.forward(&y, mode)?;
        Ok(self.relu.forward(&y, mode))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(grad)?;
        let g = self.bn.backward(&g)?;
        let g = self.conv.backward(&g)?;
        self.up.backward(&g)
    }

    pub fn trace(&self, input: Shape, t: &mut Trace) -> Result<Shape> {
        let s = t.upsample(&format!("{}.upsample", self.conv.name), input);
        let s = t.conv(&self.conv, s)?;
        let s = t.norm(&self.bn, s);
        Ok(t.elementwise(&format!("{}.relu", self.bn.name), OpKind::Relu, s))
    }
}

impl Module for UpBlock {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        vec![LayerRef::Conv(&self.conv), LayerRef::Norm(&self.bn)]
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        vec![LayerMut::Conv(&mut self.conv), LayerMut::Norm(&mut self.bn)]
    }
}
