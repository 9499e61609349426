use crate::complexity::{OpKind, Trace};
use crate::error::{Error, Result};
use crate::layers::{BatchNorm2d, Conv2d, Gelu, LayerMut, LayerRef, Mode, Module};
use crate::tensor::{concat_channels, slice_channels, ConvSpec, Shape, Tensor};

/// Output width of the grouped 3×3 stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionWidth {
    /// `2C → C`: each group maps its half to `C/2` channels.
    #[default]
    Halved,
    /// `2C → 2C`: each half keeps its width before the pointwise pair.
    Paired,
}

impl FusionWidth {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionWidth::Halved => "halved",
            FusionWidth::Paired => "paired",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "halved" => Ok(FusionWidth::Halved),
            "paired" => Ok(FusionWidth::Paired),
            other => Err(Error::config(
                "fusion_width",
                format!("expected halved|paired, got `{other}`"),
            )),
        }
    }
}

/// Skip-Fusion block at output width `channels`; input is `2·channels`
/// after concatenating encoder and decoder features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipFusionCfg {
    pub channels: usize,
    pub width: FusionWidth,
}

impl SkipFusionCfg {
    pub const GROUPS: usize = 2;

    pub fn in_channels(&self) -> usize {
        2 * self.channels
    }

    pub fn grouped_out(&self) -> usize {
        match self.width {
            FusionWidth::Halved => self.channels,
            FusionWidth::Paired => 2 * self.channels,
        }
    }

    pub fn hidden(&self) -> usize {
        4 * self.channels
    }
}

/// `concat(enc, dec)` → grouped 3×3 conv (2 groups) → GELU → BN →
/// pointwise → GELU → BN → pointwise → GELU → BN.
///
/// Concatenation puts the encoder first, so group 0 sees only encoder
/// channels and group 1 only decoder channels.
#[derive(Debug, Clone)]
pub struct SkipFusion {
    pub cfg: SkipFusionCfg,
    pub gconv: Conv2d,
    pub gbn: BatchNorm2d,
    pub pw1: Conv2d,
    pub pw1bn: BatchNorm2d,
    pub pw2: Conv2d,
    pub pw2bn: BatchNorm2d,
    acts: [Gelu; 3],
}

impl SkipFusion {
    pub fn new(name: &str, cfg: SkipFusionCfg, seed: u64) -> Result<Self> {
        let (g, h, c) = (cfg.grouped_out(), cfg.hidden(), cfg.channels);
        let gspec = ConvSpec::same(cfg.in_channels(), g, 3).with_groups(SkipFusionCfg::GROUPS);
        Ok(SkipFusion {
            cfg,
            gconv: Conv2d::new(format!("{name}.gconv"), gspec, seed)?,
            gbn: BatchNorm2d::new(format!("{name}.gbn"), g),
            pw1: Conv2d::new(format!("{name}.pw1"), ConvSpec::pointwise(g, h), seed)?,
            pw1bn: BatchNorm2d::new(format!("{name}.pw1bn"), h),
            pw2: Conv2d::new(format!("{name}.pw2"), ConvSpec::pointwise(h, c), seed)?,
            pw2bn: BatchNorm2d::new(format!("{name}.pw2bn"), c),
            acts: Default::default(),
        })
    }

    /// Output of the grouped stage before activation, exposed for inspection.
    pub fn grouped(&mut self, enc: &Tensor, dec: &Tensor, mode: Mode) -> Result<Tensor> {
        if enc.shape() != dec.shape() {
            return Err(Error::ShapeMismatch {
                op: "skip_fusion",
                lhs: enc.shape(),
                rhs: dec.shape(),
            });
        }
        let x = concat_channels(enc, dec)?;
        self.gconv.forward(&x, mode)
    }

    pub fn forward(&mut self, enc: &Tensor, dec: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.grouped(enc, dec, mode)?;
        let y = self.acts[0].forward(&y, mode);
        let y = self.gbn.forward(&y, mode)?;
        let y = self.pw1.forward(&y, mode)?;
        let y = self.acts[1].forward(&y, mode);
        let y = self.pw1bn.forward(&y, mode)?;
        let y = self.pw2.forward(&y, mode)?;
        let y = self.acts[2].forward(&y, mode);
        self.pw2bn.forward(&y, mode)
    }

    /// Returns `(grad_enc, grad_dec)`.
    pub fn backward(&mut self, grad: &Tensor) -> Result<(Tensor, Tensor)> {
        let g = self.pw2bn.backward(grad)?;
        let g = self.acts[2].backward(&g)?;
        let g = self.pw2.backward(&g)?;
        let g = self.pw1bn.backward(&g)?;
        let g = self.acts[1].backward(&g)?;
        let g = self.pw1.backward(&g)?;
        let g = self.gbn.backward(&g)?;
        let g = self.acts[0].backward(&g)?;
        let g = self.gconv.backward(&g)?;
        let c = self.cfg.channels;
        Ok((slice_channels(&g, 0, c)?, slice_channels(&g, c, c)?))
    }

    pub fn trace(&self, enc: Shape, dec: Shape, t: &mut Trace) -> Result<Shape> {
        let s = t.concat(&format!("{}.concat", self.gconv.name), enc, dec)?;
        let s = t.conv(&self.gconv, s)?;
        let s = t.elementwise(&format!("{}.gelu", self.gconv.name), OpKind::Gelu, s);
        let s = t.norm(&self.gbn, s);
        let s = t.conv(&self.pw1, s)?;
        let s = t.elementwise(&format!("{}.gelu", self.pw1.name), OpKind::Gelu, s);
        let s = t.norm(&self.pw1bn, s);
        let s = t.conv(&self.pw2, s)?;
        let s = t.elementwise(&format!("{}.gelu", self.pw2.name), OpKind::Gelu, s);
        Ok(t.norm(&self.pw2bn, s))
    }
}

impl Module for SkipFusion {
    fn layers(&self) -> Vec<LayerRef<'_>> {
        vec![
            LayerRef::Conv(&self.gconv),
            LayerRef::Norm(&self.gbn),
            LayerRef::Conv(&self.pw1),
            LayerRef::Norm(&self.pw1bn),
            LayerRef::Conv(&self.pw2),
            LayerRef::Norm(&self.pw2bn),
        ]
    }

    fn layers_mut(&mut self) -> Vec<LayerMut<'_>> {
        vec![
            LayerMut::Conv(&mut self.gconv),
            LayerMut::Norm(&mut self.gbn),
            LayerMut::Conv(&mut self.pw1),
            LayerMut::Norm(&mut self.pw1bn),
            LayerMut::Conv(&mut self.pw2),
            LayerMut::Norm(&mut self.pw2bn),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: usize) -> SkipFusionCfg {
        SkipFusionCfg {
            channels: c,
            width: FusionWidth::Halved,
        }
    }

    #[test]
    fn level_two_param_count_closed_form() {
        let f = SkipFusion::new("f", cfg(16), 0).unwrap();
        let closed = (9 * 32 * 16 / 2 + 16) + (16 * 64 + 64) + (64 * 16 + 16) + (32 + 128 + 32);
        assert_eq!(closed, 4640);
        assert_eq!(f.param_count(), closed);
    }

    #[test]
    fn paired_width_param_count() {
        let f = SkipFusion::new(
            "f",
            SkipFusionCfg {
                channels: 16,
                width: FusionWidth::Paired,
            },
            0,
        )
        .unwrap();
        let closed = (9 * 32 * 32 / 2 + 32) + 64 + (32 * 64 + 64) + 128 + (64 * 16 + 16) + 32;
        assert_eq!(f.param_count(), closed);
    }

    #[test]
    fn decoder_perturbation_leaves_group_zero() {
        let mut f = SkipFusion::new("f", cfg(6), 3).unwrap();
        let enc = Tensor::from_fn([1, 6, 8, 8], |_, c, h, w| ((c * 5 + h * 3 + w) % 7) as f32 * 0.2);
        let dec = Tensor::from_fn([1, 6, 8, 8], |_, c, h, w| ((c + h * w) % 5) as f32 * -0.3);
        let a = f.grouped(&enc, &dec, Mode::Eval).unwrap();
        let b = f.grouped(&enc, &Tensor::zeros(dec.shape()), Mode::Eval).unwrap();
        let half = 3;
        let a0 = slice_channels(&a, 0, half).unwrap();
        let b0 = slice_channels(&b, 0, half).unwrap();
        assert_eq!(a0, b0);
        assert_ne!(
            slice_channels(&a, half, half).unwrap(),
            slice_channels(&b, half, half).unwrap()
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut f = SkipFusion::new("f", cfg(4), 0).unwrap();
        let err = f
            .forward(&Tensor::zeros([1, 4, 8, 8]), &Tensor::zeros([1, 4, 4, 4]), Mode::Eval)
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }
}
