//! Architectures: classic bicubic, the one-layer eSR family and the ESPCN and
//! FSRCNN baselines.

pub mod bicubic;
mod network;
mod spec;

pub use network::{
    bicubic_bank, head_candidates, init_weights, output_shape, param_count, Layout, Param,
    ParamShape, ParamSpec, ParamValue, Trace, WeightBank,
};
pub use spec::{format_model_name, parse_model_name, model_grid, model_grid_for_scale, Arch, ModelSpec};
