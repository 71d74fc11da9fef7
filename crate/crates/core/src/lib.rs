//! Super-resolution for edge devices.
//!
//! One-layer self-attention upscalers (eSR-MAX, eSR-TM, eSR-TR), the eSR-CNN,
//! ESPCN and FSRCNN baselines, and classic bicubic in split-filter form, with
//! training, evaluation, speed measurement and filter analysis.

pub mod analysis;
pub mod bench;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use models::{Arch, ModelSpec, WeightBank};
pub use tensor::{ConvWeights, Shape, Tensor};
