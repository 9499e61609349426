//! Composite blocks of the CMUNeXt family and of the U-Net baseline.
//!
//! Every block owns its layers, runs forward in a given [`Mode`](crate::layers::Mode),
//! and back-propagates through the context its layers recorded. `trace`
//! walks the same wiring symbolically for the complexity counters.

mod cmunext_block;
mod conv_block;
mod skip_fusion;
mod up_block;

pub use cmunext_block::{CmuNextBlock, CmuNextBlockCfg, CmuNextUnit};
pub use conv_block::{ConvBlock, DoubleConv};
pub use skip_fusion::{FusionWidth, SkipFusion, SkipFusionCfg};
pub use up_block::UpBlock;
