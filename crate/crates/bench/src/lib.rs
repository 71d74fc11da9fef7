//! Fixtures shared by the criterion benchmarks.

use esr_core::models::{bicubic_bank, init_weights, parse_model_name, Arch};
use esr_core::{ConvWeights, Shape, Tensor, WeightBank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One representative configuration per architecture.
pub const MODELS: [&str; 7] = [
    "Bicubic_s2",
    "eSR-MAX_s2_K3_C4",
    "eSR-TM_s2_K5_C4",
    "eSR-TR_s2_K5_C4",
    "eSR-CNN_s2_C4_D3_S6",
    "ESPCN_s2_D22_S32",
    "FSRCNN_s2_D25_S5_M1",
];

pub fn luma(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, _, _| rng.gen_range(0.0..255.0))
}

pub fn filters(out: usize, inp: usize, k: usize, seed: u64) -> ConvWeights<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ConvWeights::from_fn(out, inp, k, k, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

pub fn model(name: &str) -> WeightBank<f32> {
    let spec = parse_model_name(name).expect("fixture names are valid");
    match spec.arch {
        Arch::Bicubic => bicubic_bank(spec.scale),
        _ => init_weights(&spec, 0),
    }
    .expect("fixture models build")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        for name in MODELS {
            let out = model(name).forward(&luma(6, 5, 0)).unwrap();
            assert_eq!(out.shape(), Shape::new(1, 1, 12, 10));
        }
    }
}
