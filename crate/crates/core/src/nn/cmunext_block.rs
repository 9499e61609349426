use crate::complexity::{OpKind, Trace};
use crate::error::{Error, Result};
use crate::layers::{BatchNorm2d, Conv2d, Gelu, LayerMut, LayerRef, Mode, Module};
use crate::tensor::{residual_add, ConvSpec, Shape, Tensor};

/// Width, kernel and depth of one CMUNeXt block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CmuNextBlockCfg {
    pub channels: usize,
    pub kernel: usize,
    pub depth: usize,
}

impl CmuNextBlockCfg {
    /// Expansion ratio of the pointwise pair.
    pub const EXPANSION: usize = 4;

    pub fn hidden(&self) -> usize {
        Self::EXPANSION * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("channels", "must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::config("kernel", format!("must be odd, got {}", self.kernel)));
        }
        if self.depth == 0 {
            return Err(Error::config("depth", "must be positive"));
        }
        Ok(())
    }
}

/// One unit:
///
/// ```text
/// f'  = BN(GELU(DWConv_k(f))) + f
/// f'' = BN(GELU(PWConv_{C→4C}(f')))
/// out = BN(GELU(PWConv_{4C→C}(f'')))
/// ```
#[derive(Debug, Clone)]
pub struct CmuNextUnit {
    pub dwconv: Conv2d,
    pub dwbn: BatchNorm2d,
    pub pw1: Conv2d,
    pub pw1bn: BatchNorm2d,
    pub pw2: Conv2d,
    pub pw2bn: BatchNorm2d,
    acts: [Gelu; 3],
}

impl CmuNextUnit {
    pub fn new(name: &str, cfg: CmuNextBlockCfg, seed: u64) -> Result<Self> {
        let (c, h) = (cfg.channels, cfg.hidden());
        Ok(CmuNextUnit {
            dwconv: Conv2d::new(format!("{name}.dwconv"), ConvSpec::depthwise(c, cfg.kernel), seed)?,
            dwbn: BatchNorm2d::new(format!("{name}.dwbn"), c),
            pw1: Conv2d::new(format!("{name}.pw1"), ConvSpec::pointwise(c, h), seed)?,
            pw1bn: BatchNorm2d::new(format!("{name}.pw1bn"), h),
            pw2: Conv2d::new(format!("{name}.pw2"), ConvSpec::pointwise(h, c), seed)?,
            pw2bn: BatchNorm2d::new(format!("{name}.pw2bn"), c),
            acts: Default::default(),
        })
    }

    /// The residual depthwise stage `f'` alone.
    pub fn spatial_stage(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.dwconv.forward(x, mode)?;
        let y = self.acts[0].forward(&y, mode);
        let y = self.dwbn.forward(&y, mode)?;
        residual_add(&y, x)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.spatial_stage(x, mode)?;
        let y = self.pw1.forward(&y, mode)?;
        let y = self.acts[1].forward(&y, mode);
        let y = self.pw1bn.forward(&y, mode)?;
        let y = self.pw2.forward(&y, mode)?;
        let y = self.acts[2].forward(&y, mode);
        self.pw2bn.forward(&y, mode)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.pw2bn.backward(grad)?;
        let g = self.acts[2].backward(&g)?;
        let g = self.pw2.backward(&g)?;
        let g = self.pw1bn.backward(&g)?;
        let g = self.acts[1].backward(&g)?;
        let skip = self.pw1.backward(&g)?;
        let g = self.dwbn.backward(&skip)?;
        let g = self.acts[0].backward(&g)?;
        let g = self.dwconv.backward(&g)?;
        residual_add(&g, &skip)
    }

    pub fn trace(&self, input: Shape, t: &mut Trace) -> Result<Shape> {
        let s = t.conv(&self.dwconv, input)?;
        let s = t.elementwise(&format!("{}.gelu", self.dwconv.name), OpKind::Gelu, s);
        let s = t.norm(&self.dwbn, s);
        let s = t.elementwise(&format!("{}.residual", self.dwbn.name), OpKind::Add, s);
        let s = t.conv(&self.pw1, s)?;
        let s = t.elementwise(&format!("{}.gelu", self.pw1.name), OpKind::Gelu, s);
        let s = t.norm(&self.pw1bn, s);
        let s = t.conv(&self.pw2, s)?;
        let s = t.elementwise(&format!("{}.gelu", self.pw2.name), OpKind::Gelu, s);
        Ok(t.norm(&self.pw2bn, s))
    }
}

impl Module for CmuNextUnit {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        vec![
            LayerRef::Conv(&self.dwconv),
            LayerRef::Norm(&self.dwbn),
            LayerRef::Conv(&self.pw1),
            LayerRef::Norm(&self.pw1bn),
            LayerRef::Conv(&self.pw2),
            LayerRef::Norm(&self.pw2bn),
        ]
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        vec![
            LayerMut::Conv(&mut self.dwconv),
            LayerMut::Norm(&mut self.dwbn),
            LayerMut::Conv(&mut self.pw1),
            LayerMut::Norm(&mut self.pw1bn),
            LayerMut::Conv(&mut self.pw2),
            LayerMut::Norm(&mut self.pw2bn),
        ]
    }
}

/// `depth` stacked units at constant width; preserves shape.
#[derive(Debug, Clone)]
pub struct CmuNextBlock {
    pub cfg: CmuNextBlockCfg,
    pub units: Vec<CmuNextUnit>,
}

impl CmuNextBlock {
    pub fn new(name: &str, cfg: CmuNextBlockCfg, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let units = (0..cfg.depth)
            .map(|m| CmuNextUnit::new(&format!("{name}.unit{m}"), cfg, seed))
            .collect::<Result<_>>()?;
        Ok(CmuNextBlock { cfg, units })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.channels() != self.cfg.channels {
            return Err(Error::Dimension {
                op: "cmunext_block",
                axis: "channel",
                expected: self.cfg.channels.to_string(),
                actual: x.channels(),
            });
        }
        let mut y = self.units[0].forward(x, mode)?;
        for unit in &mut self.units[1..] {
            y = unit.forward(&y, mode)?;
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for unit in self.units.iter_mut().rev() {
            g = unit.backward(&g)?;
        }
        Ok(g)
    }

    pub fn trace(&self, input: Shape, t: &mut Trace) -> Result<Shape> {
        self.units.iter().try_fold(input, |s, u| u.trace(s, t))
    }
}

impl Module for CmuNextBlock {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        self.units.iter().flat_map(|u| u.layers()).collect()
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        self.units.iter_mut().flat_map(|u| u.layers_mut()).collect()
    }
}
