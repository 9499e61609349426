//! CMUNeXt medical image segmentation on the CPU.
//!
//! The crate is layered bottom up:
//!
//! * [`tensor`]: rank-4 tensors and the primitive operators with their
//!   hand-written backward passes.
//! * [`layers`]: operators bundled with parameters and saved context.
//! * [`nn`]: the CMUNeXt block, Skip-Fusion block, up block and conv blocks.
//! * [`model`]: the full variants and U-Net ablation baselines.
//! * [`complexity`]: analytic parameter and MAC counters.
//! * [`train`], [`data`]: loss, optimizer, schedule, training loop, datasets
//!   and metrics.
//! * [`weights`]: the binary weight container.

pub mod complexity;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use layers::{Mode, Module};
pub use model::{build_cmunext, build_unet_baseline, substitute_block, AblationSite, Model, ModelCard, VariantConfig};
pub use tensor::{Shape, Tensor};
